//! Synthetic lifelong-editing benchmark.

pub mod lifelong;
pub mod report;
pub mod router;
pub mod scaling;
pub mod stream;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::adaptor::AdaptorConfig;
use crate::hopfield::HopfieldParams;

pub use lifelong::{evaluate, overall, run_lifelong, CheckpointMetrics, MetricsReport};
pub use router::{build_router, EditRouter, NormalizedRouter, RawRouter, RouterKind};
pub use scaling::{linear_fit, scaling_stress, LinearFit, ScalingConfig, ScalingReport};
pub use stream::{generate_stream, EditSample, StreamConfig};
pub use sweep::{sweep, SweepAxis, SweepReport, SweepRow};

/// Everything one lifelong run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub stream: StreamConfig,
    pub params: HopfieldParams,
    pub adaptor: AdaptorConfig,
    pub router: RouterKind,
    /// Edit counts at which metrics are taken; empty means only at the end.
    pub checkpoints: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            stream: StreamConfig::default(),
            params: HopfieldParams::default(),
            adaptor: AdaptorConfig::default(),
            router: RouterKind::Horen,
            checkpoints: Vec::new(),
        }
    }
}

impl BenchConfig {
    pub fn run(&self) -> crate::error::Result<MetricsReport> {
        let stream = generate_stream(&self.stream)?;
        run_lifelong(&stream, self.router, &self.params, &self.adaptor, &self.checkpoints)
    }
}
