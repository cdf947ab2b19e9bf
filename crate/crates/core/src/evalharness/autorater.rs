//! Pairwise summary comparison through a text endpoint.
//!
//! Each pair is judged once: the two summaries are placed in a fixed
//! prompt in an order decided by a seeded coin flip, the endpoint
//! returns one verdict digit per criterion, and the digits are mapped
//! back through the placement so results are always expressed as
//! candidate-vs-reference. Position bias in the rater therefore
//! cancels in aggregate. Malformed verdict lines exclude only the
//! criterion they belong to.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::judge::{complete_with_retry, EndpointConfig, JudgeError, TextCompleter};
use crate::rng::{stream, substream};

/// Criterion order used in the prompt, the response format, and every
/// aggregate table.
pub const CRITERIA: [&str; 4] = ["Factuality", "Abstractiveness", "Readability", "Overall"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    CandidateWins,
    Equal,
    ReferenceWins,
    /// The rater's line for this criterion was missing or malformed.
    Excluded,
}

/// One rated pair, already unswapped into candidate/reference terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatePairResult {
    pub factuality: Verdict,
    pub abstractiveness: Verdict,
    pub readability: Verdict,
    pub overall: Verdict,
    /// True when the coin placed the candidate as summary 1.
    pub candidate_first: bool,
}

impl RatePairResult {
    /// Verdicts in [`CRITERIA`] order.
    pub fn verdicts(&self) -> [Verdict; 4] {
        [self.factuality, self.abstractiveness, self.readability, self.overall]
    }
}

/// Instantiates the comparison prompt with the two summaries in the
/// order given (placement is the caller's job).
pub fn build_rater_prompt(history: &str, summary1: &str, summary2: &str) -> String {
    format!(
        "You are an evaluator to judge which user summary is better. The user summary will be \
         used in agent systems for personalization.\n\
         \n\
         You will be provided with two user summaries to compare with, along with the input user \
         activity history that was used to generate those two summaries.\n\
         \n\
         Your job is to evaluate the summaries based on following three criteria:\n\
         \n\
         1. Factuality: Does the user summary only contain facts supported by the activity \
         history?\n\
         2. Abstractiveness: Does the user summary capture the key insights of the user based on \
         their activity history in a concise manner, instead of repeating the activity history?\n\
         3. Readability: Is the user summary fluent and readable?\n\
         And based on these, also give an overall evaluation.\n\
         \n\
         Here is the user activity history (between <history> and </history>):\n\
         <history>\n\
         {history}\n\
         </history>\n\
         \n\
         Here is the first user summary (between <summary1> and </summary1>):\n\
         <summary1>\n\
         {summary1}\n\
         </summary1>\n\
         \n\
         Here is the second user summary (between <summary2> and </summary2>):\n\
         <summary2>\n\
         {summary2}\n\
         </summary2>\n\
         \n\
         For each criteria and the overall comparison:\n\
         Respond 0 if the first summary is better;\n\
         Respond 1 if two summaries are equally good;\n\
         Respond 2 if the second summary is better.\n\
         \n\
         Please structure your response in the following format with no extra explanation.\n\
         Factuality: Your choice of 0/1/2\n\
         Abstractiveness: Your choice of 0/1/2\n\
         Readability: Your choice of 0/1/2\n\
         Overall: Your choice of 0/1/2\n\
         \n\
         Response:"
    )
}

/// Pulls one verdict digit per criterion from the rater's reply. A
/// criterion maps to `Some(digit)` only if some line reads
/// `Name: <0|1|2>` (after trimming); anything else leaves `None`.
pub fn parse_rater_response(text: &str) -> [Option<u8>; 4] {
    let mut digits = [None; 4];
    for line in text.lines() {
        let line = line.trim();
        let Some((name, rest)) = line.split_once(':') else { continue };
        let Some(slot) = CRITERIA.iter().position(|c| c.eq_ignore_ascii_case(name.trim())) else {
            continue;
        };
        if digits[slot].is_some() {
            continue;
        }
        digits[slot] = match rest.trim() {
            "0" => Some(0),
            "1" => Some(1),
            "2" => Some(2),
            _ => None,
        };
    }
    digits
}

fn unswap(digit: Option<u8>, candidate_first: bool) -> Verdict {
    match (digit, candidate_first) {
        (None, _) => Verdict::Excluded,
        (Some(1), _) => Verdict::Equal,
        (Some(0), true) | (Some(2), false) => Verdict::CandidateWins,
        (Some(0), false) | (Some(2), true) => Verdict::ReferenceWins,
        (Some(d), _) => unreachable!("parser only emits 0..=2, got {d}"),
    }
}

/// Rates `candidate` against `reference` once. The placement coin is
/// drawn from a dedicated stream of `seed`, so identical seeds always
/// produce identical placements.
pub fn auto_rate_pair(
    candidate: &str,
    reference: &str,
    history: &str,
    completer: &dyn TextCompleter,
    cfg: &EndpointConfig,
    seed: u64,
) -> Result<RatePairResult, JudgeError> {
    let mut rng = substream(seed, &[stream::RATER_PLACEMENT]);
    let candidate_first = rng.gen_range(0..2u8) == 0;
    let (first, second) =
        if candidate_first { (candidate, reference) } else { (reference, candidate) };
    let prompt = build_rater_prompt(history, first, second);
    let (reply, _retries) = complete_with_retry(completer, cfg, &prompt)?;
    let verdicts = parse_rater_response(&reply).map(|d| unswap(d, candidate_first));
    Ok(RatePairResult {
        factuality: verdicts[0],
        abstractiveness: verdicts[1],
        readability: verdicts[2],
        overall: verdicts[3],
        candidate_first,
    })
}

/// One aggregate row per criterion. `win_rate` is
/// wins / (wins + equal + losses) and `None` when nothing was rated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinRateRow {
    pub criterion: String,
    pub wins: usize,
    pub equal: usize,
    pub losses: usize,
    pub excluded: usize,
    pub win_rate: Option<f64>,
}

impl WinRateRow {
    pub fn rated(&self) -> usize {
        self.wins + self.equal + self.losses
    }

    /// CSV line matching the header
    /// `dataset,criterion,wins,equal,losses,excluded,win_rate`.
    pub fn csv_row(&self, dataset: &str) -> String {
        let rate = match self.win_rate {
            Some(r) => format!("{r}"),
            None => "NA".to_string(),
        };
        format!(
            "{dataset},{},{},{},{},{},{rate}",
            self.criterion, self.wins, self.equal, self.losses, self.excluded
        )
    }
}

/// Tallies verdicts per criterion. Counts reconcile by construction:
/// wins + equal + losses + excluded = results.len() in each row.
pub fn aggregate_win_rates(results: &[RatePairResult]) -> Vec<WinRateRow> {
    CRITERIA
        .iter()
        .enumerate()
        .map(|(slot, criterion)| {
            let (mut wins, mut equal, mut losses, mut excluded) = (0usize, 0, 0, 0);
            for result in results {
                match result.verdicts()[slot] {
                    Verdict::CandidateWins => wins += 1,
                    Verdict::Equal => equal += 1,
                    Verdict::ReferenceWins => losses += 1,
                    Verdict::Excluded => excluded += 1,
                }
            }
            let rated = wins + equal + losses;
            let win_rate = (rated > 0).then(|| wins as f64 / rated as f64);
            WinRateRow {
                criterion: criterion.to_string(),
                wins,
                equal,
                losses,
                excluded,
                win_rate,
            }
        })
        .collect()
}
