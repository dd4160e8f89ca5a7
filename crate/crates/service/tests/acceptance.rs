//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --release -p sdm-service --test acceptance`. Set
//! `SDM_ACCEPTANCE=1,3,7` to run a subset; criteria 5 and 8 reuse the
//! checkpoint trained by criterion 6, so selecting either also runs 6.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use sdm_core::encoder::EncoderConfig;
use sdm_core::generator::{select_next, DecoderState, Generator, EOS};
use sdm_core::geometry::synthetic::{generate_dataset, generate_model};
use sdm_core::geometry::{model_from_json, model_to_json, LoopPolygon, MeshModel, Triangle, Vec3};
use sdm_core::model::{ModelConfig, SdmModel};
use sdm_core::nn::{Graph, Mat, ParamId, ParamStore, Var};
use sdm_core::oracle;
use sdm_core::parser::{builtin_corpus, evaluate_corpus, parse_with_grammar, parse_with_llm, LlmClient};
use sdm_core::text::TextProvider;
use sdm_core::tokenizer::{tokenize_model, tokenize_polygon, tokenize_segment, tokenize_triangle};
use sdm_core::trainer::loss::position_weights;
use sdm_core::trainer::{
    evaluate, masked_weighted_bce, prepare_models, primary_type, standard_bce, stratified_split, train, LabelSequence,
    TrainConfig,
};
use sdm_core::{FeatureTerm, FeatureType};
use sdm_service::{router, AppState, ServiceConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dataset() -> Vec<MeshModel> {
    generate_dataset(550, 1).expect("synthetic dataset").0
}

// ---------------------------------------------------------------- 1

fn tokenizer_exactness() -> Check {
    let v = Vec3::new;
    let seg = tokenize_segment(v(1.0, 2.0, 3.0), v(4.0, 6.0, 8.0)).map_err(|e| e.to_string())?;
    ensure(seg.0 == [1.0, 2.0, 3.0, 3.0, 4.0, 5.0], || {
        format!("segment token {:?}", seg.0)
    })?;

    let square = LoopPolygon {
        vertices: vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0), v(0.0, 1.0, 0.0)],
    };
    let poly = tokenize_polygon(&square).map_err(|e| e.to_string())?;
    let want = vec![
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0, -1.0, 0.0],
    ];
    ensure(poly.rows == want, || format!("unit square rows {:?}", poly.rows))?;

    let tri = Triangle {
        vertices: [v(0.0, 0.0, 0.0), v(3.0, 0.0, 0.0), v(0.0, 3.0, 0.0)],
        neighbors: [0, 0, 0],
    };
    let t = tokenize_triangle(&tri).map_err(|e| e.to_string())?;
    ensure(t.location == [1.0, 1.0, 0.0], || format!("centroid {:?}", t.location))?;
    ensure(t.normal() == [0.0, 0.0, 1.0], || format!("normal {:?}", t.normal()))?;
    let corners = [t.corner(0), t.corner(1), t.corner(2)];
    ensure(
        corners == [[-1.0, -1.0, 0.0], [2.0, -1.0, 0.0], [-1.0, 2.0, 0.0]],
        || format!("corners {corners:?}"),
    )?;

    let models = dataset();
    let (mut triangles, mut loops, mut worst) = (0usize, 0usize, 0f64);
    for m in &models {
        for face in tokenize_model(m).map_err(|e| format!("{}: {e}", m.model_id))? {
            for t in &face.triangle_tokens {
                triangles += 1;
                for k in 0..3 {
                    let s: f64 = (0..3).map(|i| t.corner(i)[k]).sum();
                    worst = worst.max(s.abs());
                }
            }
            for p in &face.polygon_tokens {
                loops += 1;
                let n = p.rows.len();
                for k in 0..3 {
                    let s: f64 = p.rows.iter().map(|r| r[3 + k]).sum();
                    worst = worst.max(s.abs());
                    for i in 0..n {
                        let (a, b) = (p.rows[i], p.rows[(i + 1) % n]);
                        worst = worst.max((a[k] + a[3 + k] - b[k]).abs());
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("identity residual {worst:e}"))?;
    Ok(format!(
        "hand fixtures exact; {} models, {triangles} triangles, {loops} loops, max residual {worst:.1e}",
        models.len()
    ))
}

// ---------------------------------------------------------------- 2

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            }
        })
        .collect();
    if row.iter().all(|&x| x == 0.0) {
        row[0] = 1.0;
    }
    let z: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= z);
    row
}

/// The same weighted loss assembled on the autodiff tape, as training does.
fn tape_loss(preds: &[Mat], labels: &[LabelSequence], alpha: f64) -> f64 {
    let store = ParamStore::default();
    let mut g = Graph::new(&store);
    let total: usize = labels.iter().map(|l| l.valid_length).sum();
    let mut acc: Option<Var> = None;
    for (p, l) in preds.iter().zip(labels) {
        let w = position_weights(l, p.rows, alpha)
            .into_iter()
            .map(|w| w / total as f64)
            .collect();
        let targets = (0..p.rows).map(|j| l.tokens[j + 1]).collect();
        let pv = g.input(p.clone());
        let term = g.bce_one_hot(pv, targets, w);
        acc = Some(acc.map_or(term, |a| g.add(a, term)));
    }
    g.scalar(acc.unwrap())
}

fn loss_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut full_mask_cases) = (0f64, 0usize);
    for case in 0..1000 {
        let b = rng.gen_range(1..=4);
        let l = rng.gen_range(1..=6);
        let n = rng.gen_range(1..=8);
        let full = case % 4 == 0;
        let alpha = if full { 1.0 } else { rng.gen_range(1.0..10.0) };
        let mut preds = Vec::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut targets = Vec::new();
        let mut valid = Vec::new();
        for _ in 0..b {
            let r: Vec<Vec<f64>> = (0..l).map(|_| random_distribution(&mut rng, n + 1)).collect();
            let t: Vec<usize> = (0..l).map(|_| rng.gen_range(0..=n)).collect();
            let v = if full { l } else { rng.gen_range(1..=l) };
            let mut tokens = vec![rng.gen_range(1..=n)];
            tokens.extend(&t);
            preds.push(Mat::from_rows(&r));
            labels.push(LabelSequence {
                tokens,
                valid_length: v,
            });
            rows.push(r);
            targets.push(t);
            valid.push(v);
        }
        let want = oracle::masked_weighted_bce(&rows, &targets, &valid, alpha);
        let got = masked_weighted_bce(&preds, &labels, alpha).map_err(|e| e.to_string())?;
        let tape = tape_loss(&preds, &labels, alpha);
        worst = worst.max((got - want).abs()).max((tape - want).abs());
        if full {
            full_mask_cases += 1;
            let plain = standard_bce(&preds, &targets);
            ensure(plain == got, || {
                format!("case {case}: alpha=1 full mask {got} != unmasked {plain}")
            })?;
            ensure((oracle::standard_bce(&rows, &targets) - plain).abs() <= 1e-9, || {
                format!("case {case}: unmasked loss disagrees with its oracle")
            })?;
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "1000 instances, max deviation {worst:.1e}; {full_mask_cases} alpha=1 full-mask cases equal the unmasked loss exactly"
    ))
}

// ---------------------------------------------------------------- 3 and 4

struct Tiny {
    store: ParamStore,
    gen: Generator,
    text_dim: usize,
    d: usize,
}

fn tiny(rng: &mut ChaCha8Rng) -> Tiny {
    let d = [2, 4, 6, 8][rng.gen_range(0..4)];
    let heads = if d % 4 == 0 && rng.gen_bool(0.5) { 2 } else { 1 };
    let text_dim = rng.gen_range(2..=6);
    let cfg = EncoderConfig {
        d_model: d,
        encoder_layers: 1,
        heads,
        feed_forward_dim: 2 * d,
        dropout: 0.0,
        text_dim,
    };
    let mut store = ParamStore::default();
    let gen = Generator::new(&mut store, &cfg, 1, rng);
    // randomize the normalization too so it is not the identity
    for id in [gen.memory_norm.gain, gen.memory_norm.bias] {
        for x in &mut store.value_mut(id).data {
            *x = rng.gen_range(-1.5..1.5);
        }
    }
    Tiny {
        store,
        gen,
        text_dim,
        d,
    }
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(0.7)).collect();
    for r in 0..rows {
        if !m[r * cols..(r + 1) * cols].contains(&true) {
            m[r * cols + rng.gen_range(0..cols)] = true;
        }
    }
    m
}

fn rows_of(store: &ParamStore, id: ParamId) -> Vec<Vec<f64>> {
    oracle::to_rows(store.value(id))
}

fn attention_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_sum, mut distributions) = (0f64, 0f64, 0usize);
    for _ in 0..1000 {
        let t = tiny(&mut rng);
        let n = rng.gen_range(1..=5);
        let steps = rng.gen_range(1..=3);
        let es = random_mat(&mut rng, 1, t.text_dim);
        let ef = random_mat(&mut rng, n, t.d);
        let h = random_mat(&mut rng, steps, t.d);
        let mask = random_mask(&mut rng, steps, n + 1);

        let mut g = Graph::new(&t.store);
        let (esv, efv, hv) = (g.input(es.clone()), g.input(ef.clone()), g.input(h.clone()));
        let fused = t.gen.fuse(&mut g, esv, efv);
        let cands = t.gen.candidates(&mut g, efv);
        let logits = t.gen.pointer_logits(&mut g, fused, hv, cands);
        let probs = g.softmax(logits, Some(&mask));

        let f = &t.gen.fusion;
        let want_f = oracle::fusion(
            es.row(0),
            &oracle::to_rows(&ef),
            &rows_of(&t.store, f.q.w),
            &rows_of(&t.store, f.k.w),
            &rows_of(&t.store, f.v.w),
            f.heads,
        );
        for (a, b) in g.value(fused).row(0).iter().zip(&want_f) {
            worst = worst.max((a - b).abs());
        }
        let cand_rows = oracle::to_rows(g.value(cands));
        let v = t.store.value(t.gen.v).row(0).to_vec();
        for s in 0..steps {
            let allowed = &mask[s * (n + 1)..(s + 1) * (n + 1)];
            let want = oracle::pointer_distribution(
                &want_f,
                h.row(s),
                &cand_rows,
                &rows_of(&t.store, t.gen.w1.w),
                &rows_of(&t.store, t.gen.w2.w),
                &rows_of(&t.store, t.gen.w3.w),
                &v,
                allowed,
            );
            let got = g.value(probs).row(s);
            for (a, b) in got.iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
            for (j, &p) in got.iter().enumerate() {
                ensure(allowed[j] || p == 0.0, || {
                    format!("masked candidate {j} has probability {p}")
                })?;
            }
            worst_sum = worst_sum.max((got.iter().sum::<f64>() - 1.0).abs());
            worst_sum = worst_sum.max((want.iter().sum::<f64>() - 1.0).abs());
            distributions += 1;
        }

        // the decoder's own step distributions, with memory normalization and masking
        let memory = t.gen.memory(&mut g, efv);
        let fused = t.gen.fuse(&mut g, esv, memory);
        let mut state = DecoderState::new(n, rng.gen_range(1..=n));
        for _ in 0..n {
            let p = t.gen.step_distribution(&mut g, memory, fused, &state);
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            distributions += 1;
            let j = select_next(&p);
            if j == EOS {
                break;
            }
            state.push(j);
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    ensure(worst_sum <= 1e-6, || format!("distribution sums off by {worst_sum:e}"))?;
    Ok(format!(
        "1000 cases (d<=8, N<=5), max deviation {worst:.1e}; {distributions} distributions sum to 1 within {worst_sum:.1e}"
    ))
}

struct GradCase {
    es: Mat,
    ef: Mat,
    h: Mat,
    mask: Vec<bool>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

/// LN memory -> fusion -> pointer -> masked softmax -> weighted BCE.
fn stack_loss(g: &mut Graph, gen: &Generator, c: &GradCase, inputs: (Var, Var, Var)) -> Var {
    let (es, ef, h) = inputs;
    let memory = gen.memory(g, ef);
    let fused = gen.fuse(g, es, memory);
    let cands = gen.candidates(g, memory);
    let logits = gen.pointer_logits(g, fused, h, cands);
    let p = g.softmax(logits, Some(&c.mask));
    g.bce_one_hot(p, c.targets.clone(), c.weights.clone())
}

fn input_mut(c: &mut GradCase, which: usize) -> &mut Mat {
    match which {
        0 => &mut c.es,
        1 => &mut c.ef,
        _ => &mut c.h,
    }
}

fn eval_stack(store: &ParamStore, gen: &Generator, c: &GradCase) -> f64 {
    let mut g = Graph::new(store);
    let inputs = (g.input(c.es.clone()), g.input(c.ef.clone()), g.input(c.h.clone()));
    let l = stack_loss(&mut g, gen, c, inputs);
    g.scalar(l)
}

fn gradient_check() -> Check {
    const STEP: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut scalars) = (0f64, 0usize);
    for case in 0..50 {
        let mut t = tiny(&mut rng);
        let n = rng.gen_range(1..=5);
        let steps = rng.gen_range(1..=3);
        let mask = random_mask(&mut rng, steps, n + 1);
        let targets = (0..steps)
            .map(|s| {
                let ok: Vec<usize> = (0..=n).filter(|&j| mask[s * (n + 1) + j]).collect();
                ok[rng.gen_range(0..ok.len())]
            })
            .collect();
        let alpha = rng.gen_range(1.0..6.0);
        let weights = (0..steps)
            .map(|s| (if s + 1 == steps { alpha } else { 1.0 }) / steps as f64)
            .collect();
        let mut c = GradCase {
            es: random_mat(&mut rng, 1, t.text_dim),
            ef: random_mat(&mut rng, n, t.d),
            h: random_mat(&mut rng, steps, t.d),
            mask,
            targets,
            weights,
        };

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        let (param_grads, input_grads) = {
            let mut g = Graph::new(&t.store);
            let inputs = (g.input(c.es.clone()), g.input(c.ef.clone()), g.input(c.h.clone()));
            let l = stack_loss(&mut g, &t.gen, &c, inputs);
            let grads = g.backward(l);
            let ins: Vec<Mat> = [inputs.0, inputs.1, inputs.2]
                .iter()
                .map(|&v| g.grad_of(l, v).expect("input reaches the loss"))
                .collect();
            (grads, ins)
        };
        let gen = &t.gen;
        let params = [
            gen.fusion.q.w,
            gen.fusion.k.w,
            gen.fusion.v.w,
            gen.memory_norm.gain,
            gen.memory_norm.bias,
            gen.w1.w,
            gen.w2.w,
            gen.w3.w,
            gen.v,
            gen.eos,
        ];
        for id in params {
            let grad = param_grads.get(id).cloned().unwrap_or_else(|| {
                let (r, c) = t.store.value(id).shape();
                Mat::zeros(r, c)
            });
            for k in 0..grad.data.len() {
                let orig = t.store.value(id).data[k];
                t.store.value_mut(id).data[k] = orig + STEP;
                let up = eval_stack(&t.store, &t.gen, &c);
                t.store.value_mut(id).data[k] = orig - STEP;
                let down = eval_stack(&t.store, &t.gen, &c);
                t.store.value_mut(id).data[k] = orig;
                analytic.push(grad.data[k]);
                numeric.push((up - down) / (2.0 * STEP));
            }
        }
        for (which, grad) in input_grads.iter().enumerate() {
            for k in 0..grad.data.len() {
                let orig = input_mut(&mut c, which).data[k];
                input_mut(&mut c, which).data[k] = orig + STEP;
                let up = eval_stack(&t.store, &t.gen, &c);
                input_mut(&mut c, which).data[k] = orig - STEP;
                let down = eval_stack(&t.store, &t.gen, &c);
                input_mut(&mut c, which).data[k] = orig;
                analytic.push(grad.data[k]);
                numeric.push((up - down) / (2.0 * STEP));
            }
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = diff / (norm(&analytic) + norm(&numeric)).max(1e-12);
        ensure(rel <= 1e-3, || format!("case {case}: relative error {rel:e}"))?;
        worst = worst.max(rel);
        scalars += analytic.len();
    }
    Ok(format!(
        "50 instances, {scalars} partials, max relative error {worst:.1e}"
    ))
}

// ---------------------------------------------------------------- 5

fn decode_invariants(trained: &SdmModel) -> Check {
    let models = generate_dataset(60, 11).map_err(|e| e.to_string())?.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nets = vec![("trained", trained.clone())];
    for seed in 0..4 {
        nets.push((
            "untrained",
            SdmModel::new(ModelConfig::desk(), 100 + seed).map_err(|e| e.to_string())?,
        ));
    }
    let vocab = FeatureTerm::vocabulary();
    let (mut invocations, mut trained_calls, mut longest) = (0usize, 0usize, 0usize);
    for (kind, net) in &nets {
        let calls_per_model = if *kind == "trained" {
            5000 / models.len() + 1
        } else {
            1250 / models.len() + 1
        };
        for m in &models {
            let ef = net.encode(m).map_err(|e| e.to_string())?;
            let n = m.face_count();
            for _ in 0..calls_per_model {
                let term = vocab[rng.gen_range(0..vocab.len())];
                let es = net
                    .embed_text(term.name(), &TextProvider::Local)
                    .map_err(|e| e.to_string())?;
                let seed = rng.gen_range(1..=n);
                let r = net
                    .generator
                    .generate(&net.store, &Mat::row_vector(&es), &ef, seed)
                    .map_err(|e| e.to_string())?;
                let seq = &r.raw_sequence;
                ensure(seq.len() <= n + 1, || format!("{kind}: {} tokens for N={n}", seq.len()))?;
                let body: Vec<usize> = seq.iter().copied().filter(|&j| j != EOS).collect();
                let unique: BTreeSet<usize> = body.iter().copied().collect();
                ensure(unique.len() == body.len(), || {
                    format!("{kind}: duplicate id in {seq:?}")
                })?;
                ensure(body.iter().all(|&j| (1..=n).contains(&j)), || {
                    format!("{kind}: id out of range in {seq:?}")
                })?;
                ensure(
                    seq.iter().position(|&j| j == EOS).is_none_or(|p| p + 1 == seq.len()),
                    || format!("{kind}: EOS before the end of {seq:?}"),
                )?;
                longest = longest.max(seq.len());
                invocations += 1;
                if *kind == "trained" {
                    trained_calls += 1;
                }
            }
        }
    }
    ensure(invocations >= 10_000, || format!("only {invocations} invocations"))?;
    Ok(format!(
        "{invocations} invocations ({trained_calls} trained, {} untrained), no duplicates, none over N+1 (longest {longest})",
        invocations - trained_calls
    ))
}

// ---------------------------------------------------------------- 6

fn desk_learning(checkpoint: &Path) -> Check {
    let t0 = Instant::now();
    let parts = stratified_split(dataset(), primary_type, &[400.0, 50.0, 100.0], 1);
    ensure(parts[0].len() == 400 && parts[2].len() == 100, || {
        format!(
            "split sizes {} / {} / {}",
            parts[0].len(),
            parts[1].len(),
            parts[2].len()
        )
    })?;
    let types: BTreeSet<String> = parts[0].iter().map(primary_type).collect();
    ensure(types.len() == 8, || {
        format!("{} feature types in training", types.len())
    })?;
    let prep = |m: &[MeshModel]| prepare_models(m).map_err(|e| e.to_string());
    let (tr, va, te) = (prep(&parts[0])?, prep(&parts[1])?, prep(&parts[2])?);

    let tc = TrainConfig::default();
    let out = train(&tr, &va, &tc, ModelConfig::desk(), &mut |l| {
        if l.epoch % 10 == 0 {
            eprintln!(
                "    epoch {:3}  loss {:.4}  val iou {:.4}  em {:.4}",
                l.epoch, l.train_loss, l.val_iou, l.val_em
            );
        }
    })
    .map_err(|e| e.to_string())?;
    out.model.save(checkpoint).map_err(|e| e.to_string())?;
    let test = evaluate(&out.model, &te).map_err(|e| e.to_string())?;
    let main_secs = t0.elapsed().as_secs_f64();

    // overfit sanity: a balanced 50-model subset of the training split. Batch 4
    // so the 200-epoch budget is ~2600 updates rather than ~800.
    let t1 = Instant::now();
    let subset = stratified_split(parts[0].clone(), primary_type, &[50.0, 350.0], 2).swap_remove(0);
    let small = prep(&subset)?;
    let oc = TrainConfig {
        epochs: 200,
        batch_size: 4,
        patience: 200,
        stop_at_em: Some(0.95),
        ..TrainConfig::default()
    };
    let over = train(&small, &small, &oc, ModelConfig::desk(), &mut |_| {}).map_err(|e| e.to_string())?;
    let fit = evaluate(&over.model, &small).map_err(|e| e.to_string())?;
    let over_epochs = over.history.len();

    let summary = format!(
        "test IoU {:.4} EM {:.4} (best epoch {}, {:.0}s); overfit {} models train EM {:.4} after {} epochs ({:.0}s)",
        test.iou_mean,
        test.em_rate,
        out.best_epoch,
        main_secs,
        subset.len(),
        fit.em_rate,
        over_epochs,
        t1.elapsed().as_secs_f64()
    );
    ensure(test.iou_mean >= 0.95 && test.em_rate >= 0.85, || summary.clone())?;
    ensure(fit.em_rate >= 0.95 && over_epochs <= 200, || summary.clone())?;
    Ok(summary)
}

// ---------------------------------------------------------------- 7

fn parser_accuracy() -> Check {
    let corpus = builtin_corpus();
    let r = evaluate_corpus(&corpus, parse_with_grammar);
    for o in r.entries.iter().filter(|o| !o.correct) {
        let f = o
            .result
            .failure
            .as_ref()
            .ok_or_else(|| format!("entry {} wrong without a diagnostic", o.index))?;
        ensure(f.clause.is_some() && f.offset.is_some(), || {
            format!("entry {}: unlocated failure '{}'", o.index, f.reason)
        })?;
    }
    let llm = match LlmClient::from_env() {
        Some(c) => {
            let l = evaluate_corpus(&corpus, |t| parse_with_llm(t, &c));
            format!("; llm {}/{} (not gated)", l.correct, l.total)
        }
        None => "; llm not configured".into(),
    };
    let summary = format!(
        "grammar {}/{} overall ({} simple, {} complex), supported {}/{}{llm}",
        r.correct, r.total, r.simple_correct, r.complex_correct, r.supported_correct, r.supported_total
    );
    ensure(
        r.supported_correct == r.supported_total && r.correct * 100 >= r.total * 95,
        || summary.clone(),
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------- 8

async fn request(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

async fn json_request(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> Result<Value, String> {
    let (s, bytes) = request(app, method, uri, body).await;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    ensure(s.is_success(), || format!("{method} {uri}: {s} {v}"))?;
    Ok(v)
}

async fn end_to_end_async(checkpoint: &Path) -> Check {
    let fixture = generate_model("slot_fixture", &[FeatureType::RectThroughSlot], 2024).map_err(|e| e.to_string())?;
    let slot = fixture.labels[0].face_ids.clone();
    let model = SdmModel::load(checkpoint).map_err(|e| e.to_string())?;
    let app = router(Arc::new(AppState::new(&ServiceConfig::default(), Some(model))));

    let created = json_request(
        &app,
        "POST",
        "/sessions",
        Some(json!({"model": serde_json::from_str::<Value>(&model_to_json(&fixture)).unwrap()})),
    )
    .await?;
    let id = created["session_id"].as_str().unwrap().to_owned();
    let (_, before) = request(&app, "GET", &format!("/sessions/{id}/mesh"), None).await;

    let parsed = json_request(
        &app,
        "POST",
        &format!("/sessions/{id}/parse"),
        Some(json!({"text": "move the slot 3 mm to the right", "engine": "grammar"})),
    )
    .await?;
    let command = parsed["structured"].clone();
    let feature = command["commands"][0]["feature"]["type"]
        .as_str()
        .unwrap_or_default()
        .to_owned();

    let seed = *slot.iter().next().unwrap();
    let generated = json_request(
        &app,
        "POST",
        &format!("/sessions/{id}/generate"),
        Some(json!({"seed_face_id": seed, "feature_type": feature})),
    )
    .await?;
    let faces: BTreeSet<usize> = serde_json::from_value(generated["face_ids"].clone()).map_err(|e| e.to_string())?;
    ensure(faces == slot, || format!("generated {faces:?}, labeled slot {slot:?}"))?;

    json_request(
        &app,
        "POST",
        &format!("/sessions/{id}/apply"),
        Some(json!({"command": command, "face_ids": faces})),
    )
    .await?;
    let (_, after) = request(&app, "GET", &format!("/sessions/{id}/mesh"), None).await;
    let edited = model_from_json(std::str::from_utf8(&after).unwrap()).map_err(|e| e.to_string())?;
    let original = model_from_json(std::str::from_utf8(&before).unwrap()).map_err(|e| e.to_string())?;
    let mut moved = 0;
    for (a, b) in original.faces.iter().zip(&edited.faces) {
        for (p, q) in a.vertices().zip(b.vertices()) {
            if slot.contains(&a.id) {
                let ok = q.x == p.x + 3.0 && q.y.to_bits() == p.y.to_bits() && q.z.to_bits() == p.z.to_bits();
                ensure(ok, || format!("face {}: {p:?} -> {q:?}", a.id))?;
                moved += 1;
            } else {
                let same = [p.x, p.y, p.z].map(f64::to_bits) == [q.x, q.y, q.z].map(f64::to_bits);
                ensure(same, || format!("untargeted face {} changed: {p:?} -> {q:?}", a.id))?;
            }
        }
    }

    json_request(&app, "POST", &format!("/sessions/{id}/undo"), None).await?;
    let (_, restored) = request(&app, "GET", &format!("/sessions/{id}/mesh"), None).await;
    ensure(restored == before, || "undo did not restore the original bytes".into())?;
    Ok(format!(
        "'{feature}' from face {seed} -> {:?}; {moved} slot vertices moved by (3,0,0), all others bit-identical; undo byte-exact",
        faces
    ))
}

fn end_to_end(checkpoint: &Path) -> Check {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(end_to_end_async(checkpoint))
}

// ----------------------------------------------------------------

fn run(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("criterion {n} PASS  {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("criterion {n} FAIL  {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() {
    let selected: BTreeSet<usize> = std::env::var("SDM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_else(|| (1..=8).collect());
    let want = |n| selected.contains(&n);
    let dir = tempfile::tempdir().expect("tempdir");
    let ckpt: PathBuf = dir.path().join("desk.ckpt");
    let mut failed = Vec::new();
    let mut check = |n: usize, ok: bool| {
        if !ok {
            failed.push(n);
        }
    };

    // 6 first: 5 and 8 use its checkpoint
    if want(5) || want(6) || want(8) {
        check(6, run(6, "desk-scale learning", || desk_learning(&ckpt)));
    }
    if want(1) {
        check(1, run(1, "tokenizer exactness", tokenizer_exactness));
    }
    if want(2) {
        check(2, run(2, "loss oracle", loss_oracle));
    }
    if want(3) {
        check(3, run(3, "attention oracles", attention_oracles));
    }
    if want(4) {
        check(4, run(4, "gradient check", gradient_check));
    }
    let trained = || SdmModel::load(&ckpt).map_err(|e| format!("no trained checkpoint: {e}"));
    if want(5) {
        check(5, run(5, "decode invariants", || decode_invariants(&trained()?)));
    }
    if want(7) {
        check(7, run(7, "parser accuracy", parser_accuracy));
    }
    if want(8) {
        check(8, run(8, "end-to-end edit", || end_to_end(&ckpt)));
    }

    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
