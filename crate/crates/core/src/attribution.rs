//! Leave-one-out occlusion: which tokens carry a classifier's score.

use alloc::string::String;
use alloc::vec::Vec;

use crate::bundle::ModelBundle;
use crate::model::Span;
use crate::text::tokenize;

/// Minimum score drop for a token to be highlighted.
pub const DEFAULT_ATTRIBUTION_DELTA: f64 = 0.05;
/// At most this many distinct tokens are highlighted.
pub const MAX_ATTRIBUTED_TOKENS: usize = 10;

/// Score drop obtained by zeroing one vocabulary token's count.
#[derive(Debug, Clone, PartialEq)]
pub struct Occlusion {
    pub token: String,
    pub drop: f64,
    pub spans: Vec<Span>,
}

/// Rescores `text` once per distinct in-vocabulary token with that token's
/// count zeroed. Results are in first-occurrence order.
pub fn occlusions(bundle: &ModelBundle, text: &str, base_score: f64) -> Vec<Occlusion> {
    let vocab = bundle.vocabulary();
    let mut counts = alloc::vec![0.0; vocab.len()];
    let mut found: Vec<(usize, Vec<Span>)> = Vec::new();
    for (token, span) in tokenize(text) {
        let Some(id) = vocab.index_of(&token) else { continue };
        counts[id] += 1.0;
        match found.iter_mut().find(|(i, _)| *i == id) {
            Some((_, spans)) => spans.push(span),
            None => found.push((id, alloc::vec![span])),
        }
    }
    found
        .into_iter()
        .map(|(id, spans)| {
            let saved = core::mem::replace(&mut counts[id], 0.0);
            let drop = base_score - bundle.score_counts(&counts);
            counts[id] = saved;
            Occlusion { token: String::from(vocab.token(id).unwrap_or_default()), drop, spans }
        })
        .collect()
}

/// Spans of the tokens whose removal lowers the score by at least `delta`,
/// keeping the ten largest drops (ties broken by token). Sorted by position.
pub fn attribute_spans(bundle: &ModelBundle, text: &str, base_score: f64, delta: f64) -> Vec<Span> {
    let mut hits: Vec<Occlusion> =
        occlusions(bundle, text, base_score).into_iter().filter(|o| o.drop >= delta).collect();
    hits.sort_by(|a, b| b.drop.total_cmp(&a.drop).then_with(|| a.token.cmp(&b.token)));
    hits.truncate(MAX_ATTRIBUTED_TOKENS);
    let mut spans: Vec<Span> = hits.into_iter().flat_map(|o| o.spans).collect();
    spans.sort();
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::TrainingMeta;
    use crate::mlp::{sigmoid, Mlp};
    use crate::text::Vocabulary;
    use alloc::format;
    use alloc::vec;

    fn bundle(tokens: &[&str], weights: Vec<f64>, bias: f64) -> ModelBundle {
        let vocab = Vocabulary::from_tokens(tokens.iter().map(|t| String::from(*t)).collect(), 100, 1).unwrap();
        let model = Mlp::from_parameters(&[tokens.len(), 1], vec![(weights, vec![bias])]).unwrap();
        ModelBundle::new(vocab, model, vec!["h".into()], TrainingMeta { seed: 0, epochs: 1, final_loss: 0.0 }).unwrap()
    }

    #[test]
    fn single_feature_model_highlights_that_token() {
        let b = bundle(&["kill", "the"], vec![4.0, 0.0], -2.0);
        let text = "Kill the lights, kill them";
        let base = b.score(text);
        let occ = occlusions(&b, text, base);
        // Removing "kill" drops the score all the way to sigmoid(bias).
        let kill = occ.iter().find(|o| o.token == "kill").unwrap();
        assert!((kill.drop - (base - sigmoid(-2.0))).abs() < 1e-15);
        assert_eq!(
            attribute_spans(&b, text, base, DEFAULT_ATTRIBUTION_DELTA),
            vec![Span::new(0, 4, "kill"), Span::new(17, 21, "kill")]
        );
    }

    #[test]
    fn zero_model_highlights_nothing() {
        let b = bundle(&["a", "b"], vec![0.0, 0.0], 0.0);
        assert!(attribute_spans(&b, "a b a", 0.5, DEFAULT_ATTRIBUTION_DELTA).is_empty());
    }

    #[test]
    fn no_vocabulary_tokens_no_spans() {
        let b = bundle(&["a"], vec![5.0], 0.0);
        assert!(attribute_spans(&b, "zzz qqq", b.score("zzz qqq"), 0.0).is_empty());
    }

    #[test]
    fn capped_at_ten_tokens() {
        let tokens: Vec<String> = (0..15).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
        let weights: Vec<f64> = (0..15).map(|i| 0.2 + i as f64 * 0.01).collect();
        let b = bundle(&refs, weights, -3.0);
        let text = tokens.join(" ");
        let spans = attribute_spans(&b, &text, b.score(&text), 0.0);
        assert_eq!(spans.len(), 10);
        // The five smallest weights are the ones left out.
        let labels: Vec<&str> = spans.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, refs[5..].to_vec());
    }

    #[test]
    fn every_span_passes_direct_recheck() {
        let b = bundle(&["x", "y", "z"], vec![1.5, 0.1, -1.0], 0.2);
        let text = "x y z x";
        let base = b.score(text);
        for span in attribute_spans(&b, text, base, DEFAULT_ATTRIBUTION_DELTA) {
            let without: Vec<&str> = text.split(' ').filter(|t| *t != span.label).collect();
            let drop = base - b.score(&without.join(" "));
            assert!(drop >= DEFAULT_ATTRIBUTION_DELTA, "{span:?} drop {drop}");
        }
    }
}
