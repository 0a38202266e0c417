//! Evaluation: protocol enforcement, trace reconstruction, rubric scoring,
//! and reports over a model × instance matrix.
//!
//! Build with `--no-default-features` to run the matrix sequentially.

pub mod align;
pub mod enforce;
pub mod episode;
pub mod report;
pub mod run;
pub mod score;

pub use align::{align, step_matches, Alignment};
pub use enforce::{enforce, prose_claims, Claim, Verdict, MALFORMED_CALL};
pub use episode::{
    claim_supported, infer_call, reconstruct, run_episode, Episode, EpisodeConfig, Flags, ManualClaim, Turn,
    ABSTAIN, AGENT_ERROR, TIME_BUDGET,
};
pub use report::{aggregate, bucket_of, csv_string, read_csv, write_csv, BucketStat, ModelSummary, Report, Row, BUCKETS};
pub use run::{
    episode_path, instantiate_all, load_episode, run_matrix, save_episode, RunConfig, RunError, RunOutcome,
};
pub use score::{score, HttpJudge, Judge, ScoreBreakdown, JUDGE_ENV, JUDGE_ERROR};
