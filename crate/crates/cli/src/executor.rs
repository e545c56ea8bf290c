//! Parallel batch executor: fans per-sample work across a rayon pool.
//!
//! Results are collected in input order, so training and evaluation remain
//! bit-identical to the serial executor regardless of thread count.

use radgen_core::data::TrainingSample;
use radgen_core::model::{generate, DecodeMode, Model};
use radgen_core::text::TokenSeq;
use radgen_core::training::{
    sample_grads, BatchExecutor, ClassWeights, SampleGrads, TrainError,
};
use rayon::prelude::*;

/// Evaluates samples in parallel, preserving order.
pub struct RayonExecutor;

impl BatchExecutor for RayonExecutor {
    fn map_grads(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
        w_cls: f64,
        class_weights: Option<&ClassWeights>,
    ) -> Result<Vec<SampleGrads>, TrainError> {
        samples
            .par_iter()
            .map(|s| sample_grads(model, s, w_cls, class_weights))
            .collect()
    }

    fn map_tokens(
        &self,
        model: &Model,
        samples: &[&TrainingSample],
    ) -> Result<Vec<TokenSeq>, TrainError> {
        samples
            .par_iter()
            .map(|s| Ok(generate(model, &s.views, &s.context, DecodeMode::Greedy)?))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use radgen_core::data::pair_views_multi;
    use radgen_core::model::ModelConfig;
    use radgen_core::synth::{generate_synthetic_corpus, DifficultyProfile};
    use radgen_core::text::Vocab;
    use radgen_core::training::SerialExecutor;

    #[test]
    fn parallel_results_match_serial_exactly() {
        let profile = DifficultyProfile { image_size: 8, ..DifficultyProfile::default() };
        let studies = generate_synthetic_corpus(10, 5, &profile).unwrap();
        let vocab = Vocab::build(
            studies
                .iter()
                .map(radgen_core::data::build_report)
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str),
        );
        let samples: Vec<TrainingSample> =
            studies.iter().flat_map(|s| pair_views_multi(s, &vocab)).collect();
        let refs: Vec<&TrainingSample> = samples.iter().collect();
        assert!(!refs.is_empty());

        let config = ModelConfig {
            image_size: 8,
            patch_size: 4,
            enc_depth: 1,
            enc_width: 8,
            enc_heads: 2,
            dec_depth: 1,
            dec_width: 8,
            dec_heads: 2,
            vocab_size: vocab.len(),
            max_text_tokens: 192,
            views: 2,
            classifier: false,
        };
        let model = Model::new(config, 3).unwrap();

        let par = RayonExecutor;
        let ser = SerialExecutor;
        let tokens_par = par.map_tokens(&model, &refs).unwrap();
        let tokens_ser = ser.map_tokens(&model, &refs).unwrap();
        assert_eq!(tokens_par, tokens_ser);

        let grads_par = par.map_grads(&model, &refs, 0.0, None).unwrap();
        let grads_ser = ser.map_grads(&model, &refs, 0.0, None).unwrap();
        assert_eq!(grads_par.len(), grads_ser.len());
        for (a, b) in grads_par.iter().zip(&grads_ser) {
            assert_eq!(a.loss.total, b.loss.total);
            assert_eq!(a.loss.lm_loss, b.loss.lm_loss);
        }
    }
}
