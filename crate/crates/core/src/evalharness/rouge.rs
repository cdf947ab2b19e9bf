//! Summary-level longest-common-subsequence F-measure.
//!
//! Both texts are split into sentences on newlines and periods. For
//! each reference sentence, the tokens matched by an LCS against any
//! candidate sentence are unioned, so repeating a reference token in
//! several candidate sentences never counts twice. Precision divides
//! the summed hits by the candidate token count, recall by the
//! reference token count, and the score is their F1.

use crate::text::tokenize;

fn sentences(text: &str) -> Vec<Vec<String>> {
    text.split(['\n', '.'])
        .map(tokenize)
        .filter(|tokens| !tokens.is_empty())
        .collect()
}

/// Marks reference positions participating in one LCS of `reference`
/// and `candidate`. Standard quadratic DP with a backtrack.
fn mark_lcs(reference: &[String], candidate: &[String], marked: &mut [bool]) {
    let (n, m) = (reference.len(), candidate.len());
    if n == 0 || m == 0 {
        return;
    }
    let mut dp = vec![0usize; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        for j in 1..=m {
            dp[idx(i, j)] = if reference[i - 1] == candidate[j - 1] {
                dp[idx(i - 1, j - 1)] + 1
            } else {
                dp[idx(i - 1, j)].max(dp[idx(i, j - 1)])
            };
        }
    }
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] && dp[idx(i, j)] == dp[idx(i - 1, j - 1)] + 1 {
            marked[i - 1] = true;
            i -= 1;
            j -= 1;
        } else if dp[idx(i - 1, j)] >= dp[idx(i, j - 1)] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
}

/// Summary-level LCS F1 in [0, 1]; 0 when either side has no tokens.
pub fn rouge_lsum(candidate: &str, reference: &str) -> f64 {
    let cand_sents = sentences(candidate);
    let ref_sents = sentences(reference);
    let cand_tokens: usize = cand_sents.iter().map(Vec::len).sum();
    let ref_tokens: usize = ref_sents.iter().map(Vec::len).sum();
    if cand_tokens == 0 || ref_tokens == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    for reference in &ref_sents {
        let mut marked = vec![false; reference.len()];
        for candidate in &cand_sents {
            mark_lcs(reference, candidate, &mut marked);
        }
        hits += marked.iter().filter(|&&m| m).count();
    }
    let precision = hits as f64 / cand_tokens as f64;
    let recall = hits as f64 / ref_tokens as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    (2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0)
}
