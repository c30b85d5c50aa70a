//! Statistics of Birkhoff sums: centering, covariance growth, limit-law
//! checks, block plans and the variance splitting.

pub mod blocks;
pub mod covariance;
pub mod green_kubo;
pub mod lemmas;
pub mod limits;
pub mod split;
pub mod sums;

pub use blocks::{block_plan, floor_pow, Block, BlockPlan};
pub use covariance::{covariance_trace, CovarianceTrace};
pub use green_kubo::{green_kubo, GreenKubo, TailModel};
pub use lemmas::{check_lemma_scaling, check_lemma_scaling_iid, default_epsilon, LemmaKind, LemmaRequest, ScalingReport};
pub use limits::{
    degenerate_check, ks_critical, ks_distance, lil_band, self_norming_clt, CltOptions, LilOptions, LimitKind,
    LimitReport,
};
pub use split::{covariance_split, CovarianceSplit, ZeroTol};
pub use sums::{birkhoff_sums, center_observable, gaussian_paths, CenterMethod, CenteredObservable, SumPaths, TimeMeans};
