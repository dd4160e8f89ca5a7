//! The complete recognizer: encoder, condition table and pointer generator
//! sharing one parameter store.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig, EncoderInput};
use crate::error::{Error, Result};
use crate::feature::vocabulary_names;
use crate::generator::{GenerationResult, Generator};
use crate::geometry::{normalize_model, MeshModel};
use crate::nn::checkpoint::{read_checkpoint, restore_into, write_checkpoint};
use crate::nn::{Graph, Mat, ParamStore};
use crate::text::{embed_text, TextProvider, TextTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder_layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            decoder_layers: 3,
        }
    }
}

impl ModelConfig {
    /// Reduced widths that train in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            encoder: EncoderConfig {
                d_model: 64,
                encoder_layers: 2,
                heads: 4,
                feed_forward_dim: 128,
                dropout: 0.0,
                ..EncoderConfig::default()
            },
            decoder_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.decoder_layers == 0 {
            return Err(Error::InvalidArgument("decoder_layers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SdmModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub text: TextTable,
    pub generator: Generator,
}

impl SdmModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let encoder = Encoder::new(&mut store, config.encoder, &mut rng);
        let text = TextTable::new(&mut store, &mut rng);
        let generator = Generator::new(&mut store, &config.encoder, config.decoder_layers, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            text,
            generator,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// E_F for `model` (normalized first).
    pub fn encode(&self, model: &MeshModel) -> Result<Mat> {
        let (normalized, _) = normalize_model(model)?;
        let input = EncoderInput::from_model(&normalized)?;
        let mut g = Graph::new(&self.store);
        let ef = self.encoder.encode(&mut g, &input);
        Ok(g.value(ef).clone())
    }

    pub fn embed_text(&self, feature_type: &str, provider: &TextProvider) -> Result<Vec<f64>> {
        embed_text(feature_type, provider, &self.text, &self.store)
    }

    /// Full pipeline: condition embedding, encoder, fusion, greedy pointer decoding.
    pub fn generate_feature_faces(
        &self,
        model: &MeshModel,
        seed_face_id: usize,
        feature_type: &str,
        provider: &TextProvider,
    ) -> Result<GenerationResult> {
        let n = model.face_count();
        if seed_face_id == 0 || seed_face_id > n {
            return Err(Error::InvalidArgument(format!(
                "seed face {seed_face_id} outside 1..={n}"
            )));
        }
        let es = self.embed_text(feature_type, provider)?;
        let ef = self.encode(model)?;
        self.generator
            .generate(&self.store, &Mat::row_vector(&es), &ef, seed_face_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "config": self.config,
            "vocabulary": vocabulary_names(),
        });
        write_checkpoint(path, meta, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = read_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(header.meta["config"].clone())
            .map_err(|e| Error::Parse(format!("{}: bad config: {e}", path.display())))?;
        let vocab: Vec<String> = serde_json::from_value(header.meta["vocabulary"].clone())
            .map_err(|e| Error::Parse(format!("{}: bad vocabulary: {e}", path.display())))?;
        if vocab != vocabulary_names() {
            return Err(Error::Shape("checkpoint vocabulary differs from this build".into()));
        }
        let mut model = Self::new(config, 0)?;
        restore_into(&mut model.store, tensors)?;
        Ok(model)
    }
}
