//! The vectorized fusion, pointer and loss paths against the straight-loop
//! references in `sdm_core::oracle`.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdm_core::encoder::EncoderConfig;
use sdm_core::generator::Generator;
use sdm_core::nn::{Graph, Mat, ParamStore};
use sdm_core::oracle;
use sdm_core::trainer::{masked_weighted_bce, standard_bce, LabelSequence};

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fusion_and_pointer_match_loops(seed in any::<u64>(), d_half in 1usize..=4, n in 1usize..=5, text_dim in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 * d_half;
        let heads = if d % 4 == 0 { 2 } else { 1 };
        let cfg = EncoderConfig { d_model: d, encoder_layers: 1, heads, feed_forward_dim: d, dropout: 0.0, text_dim };
        let mut store = ParamStore::default();
        let gen = Generator::new(&mut store, &cfg, 1, &mut rng);
        let es = random_mat(&mut rng, 1, text_dim);
        let ef = random_mat(&mut rng, n, d);
        let h = random_mat(&mut rng, 1, d);
        let allowed: Vec<bool> = (0..=n).map(|j| j == 0 || rng.gen_bool(0.6)).collect();

        let mut g = Graph::new(&store);
        let (esv, efv, hv) = (g.input(es.clone()), g.input(ef.clone()), g.input(h.clone()));
        let fused = gen.fuse(&mut g, esv, efv);
        let cands = gen.candidates(&mut g, efv);
        let logits = gen.pointer_logits(&mut g, fused, hv, cands);
        let p = g.softmax(logits, Some(&allowed));

        let rows = |id| oracle::to_rows(store.value(id));
        let want_f = oracle::fusion(es.row(0), &oracle::to_rows(&ef), &rows(gen.fusion.q.w), &rows(gen.fusion.k.w), &rows(gen.fusion.v.w), heads);
        for (a, b) in g.value(fused).row(0).iter().zip(&want_f) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let v = store.value(gen.v).row(0).to_vec();
        let want_p = oracle::pointer_distribution(&want_f, h.row(0), &oracle::to_rows(g.value(cands)), &rows(gen.w1.w), &rows(gen.w2.w), &rows(gen.w3.w), &v, &allowed);
        for (a, b) in g.value(p).row(0).iter().zip(&want_p) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        prop_assert!((g.value(p).row(0).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn loss_matches_loop(seed in any::<u64>(), b in 1usize..=4, l in 1usize..=6, n in 1usize..=8, alpha in 1.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut preds = Vec::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..b {
            let r: Vec<Vec<f64>> = (0..l)
                .map(|_| {
                    let raw: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let z: f64 = raw.iter().sum();
                    raw.into_iter().map(|x| x / z).collect()
                })
                .collect();
            let t: Vec<usize> = (0..l).map(|_| rng.gen_range(0..=n)).collect();
            let mut tokens = vec![1];
            tokens.extend(&t);
            preds.push(Mat::from_rows(&r));
            labels.push(LabelSequence { tokens, valid_length: rng.gen_range(1..=l) });
            rows.push(r);
            targets.push(t);
        }
        let valid: Vec<usize> = labels.iter().map(|l| l.valid_length).collect();
        let got = masked_weighted_bce(&preds, &labels, alpha).unwrap();
        prop_assert!((got - oracle::masked_weighted_bce(&rows, &targets, &valid, alpha)).abs() <= 1e-9);

        // full mask and alpha = 1 reduce to the plain mean
        let full: Vec<LabelSequence> = labels.iter().map(|x| LabelSequence { tokens: x.tokens.clone(), valid_length: l }).collect();
        prop_assert_eq!(masked_weighted_bce(&preds, &full, 1.0).unwrap(), standard_bce(&preds, &targets));
    }
}
