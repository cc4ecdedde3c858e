//! Corpus-level BLEU-4 (uniform weights, brevity penalty), used as a
//! diversity measure: lower means the generated text departs further from
//! its references.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|s| s.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram matches and candidate n-gram totals for orders 1..=4,
/// plus candidate and reference lengths.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub cand_len: usize,
    pub ref_len: usize,
}

pub fn bleu_stats<S: AsRef<str>, T: AsRef<str>>(generated: &[Vec<S>], references: &[Vec<T>]) -> BleuStats {
    let mut st = BleuStats::default();
    for (c, r) in generated.iter().zip(references) {
        st.cand_len += c.len();
        st.ref_len += r.len();
        for n in 1..=4 {
            let cg = ngrams(c, n);
            let rg = ngrams(r, n);
            st.totals[n - 1] += cg.values().sum::<usize>();
            st.matches[n - 1] += cg
                .iter()
                .map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }
    st
}

impl BleuStats {
    pub fn score(&self) -> f64 {
        if self.matches.contains(&0) || self.cand_len == 0 {
            return 0.0;
        }
        let log_p: f64 = (0..4)
            .map(|i| (self.matches[i] as f64 / self.totals[i] as f64).ln())
            .sum::<f64>()
            / 4.0;
        let bp = if self.cand_len > self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        bp * log_p.exp()
    }
}

/// Corpus BLEU-4 of `generated` against `references`, paired by index.
pub fn bleu_diversity<S: AsRef<str>, T: AsRef<str>>(
    generated: &[Vec<S>],
    references: &[Vec<T>],
) -> Result<f64> {
    if generated.is_empty() || generated.len() != references.len() {
        return Err(Error::Config(format!(
            "BLEU needs equal-length non-empty lists, got {} and {}",
            generated.len(),
            references.len()
        )));
    }
    Ok(bleu_stats(generated, references).score())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn identical_corpus_scores_one() {
        let c = vec![t("the gang attacked the town and people died")];
        assert!((bleu_diversity(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_corpus_scores_zero() {
        assert_eq!(bleu_diversity(&[t("a b c d")], &[t("e f g h")]).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_fixture() {
        // cand: the cat sat on the mat (6)   ref: the cat is on the mat (6)
        // 1-gram 5/6, 2-gram 3/5, 3-gram 1/4, 4-gram 0/3 → add a second pair
        // so every order has a match.
        let g = vec![t("the cat sat on the mat"), t("a b c d e")];
        let r = vec![t("the cat is on the mat"), t("a b c d e")];
        // totals: 11, 9, 7, 5; matches: 5+5, 3+4, 1+3, 0+2
        let expected = ((10.0f64 / 11.0).ln() + (7.0f64 / 9.0).ln() + (4.0f64 / 7.0).ln() + (2.0f64 / 5.0).ln()) / 4.0;
        let got = bleu_diversity(&g, &r).unwrap();
        assert!((got - expected.exp()).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_applies() {
        let g = vec![t("a b c d")];
        let r = vec![t("a b c d e f")];
        let got = bleu_diversity(&g, &r).unwrap();
        assert!((got - (1.0f64 - 6.0 / 4.0).exp()).abs() < 1e-12);
    }
}
