//! Residual-corrected bidirectional LSTM regressor and its ablated variants.

mod checkpoint;
pub mod layers;
mod network;
pub mod ops;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, TrainingMeta};
pub use network::{forward, forward_batch, forward_graph, windows_to_time_major};
pub use params::{
    init_params, param_group, BiClstmParams, BlockParams, CorrectorParams, GateParams,
    HeadParams, LstmCellParams, ProjectionParams,
};

/// Stability constant inside every layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// The four architectures compared in the baseline study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "clstm")]
    CLstm,
    #[serde(rename = "bilstm")]
    BiLstm,
    #[serde(rename = "biclstm")]
    BiCLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Lstm,
        Variant::CLstm,
        Variant::BiLstm,
        Variant::BiCLstm,
    ];

    /// `(bidirectional, use_corrector)`.
    pub fn flags(self) -> (bool, bool) {
        match self {
            Variant::Lstm => (false, false),
            Variant::CLstm => (false, true),
            Variant::BiLstm => (true, false),
            Variant::BiCLstm => (true, true),
        }
    }

    pub fn from_flags(bidirectional: bool, use_corrector: bool) -> Self {
        match (bidirectional, use_corrector) {
            (false, false) => Variant::Lstm,
            (false, true) => Variant::CLstm,
            (true, false) => Variant::BiLstm,
            (true, true) => Variant::BiCLstm,
        }
    }

    /// Display name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Lstm => "LSTM",
            Variant::CLstm => "cLSTM",
            Variant::BiLstm => "Bi-LSTM",
            Variant::BiCLstm => "Bi-cLSTM",
        }
    }

    /// Lower-case token used on the command line and in file names.
    pub fn token(self) -> &'static str {
        match self {
            Variant::Lstm => "lstm",
            Variant::CLstm => "clstm",
            Variant::BiLstm => "bilstm",
            Variant::BiCLstm => "biclstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.token().eq_ignore_ascii_case(s) || v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown variant {s:?}; expected one of lstm, clstm, bilstm, biclstm"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub projection_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub bidirectional: bool,
    pub use_corrector: bool,
    pub corrector_hidden_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Default Bi-cLSTM sizing: 64-wide projection and hidden state, four
    /// blocks, 32-wide corrector.
    pub fn new(input_dim: usize) -> Self {
        ModelConfig {
            input_dim,
            projection_dim: 64,
            hidden_dim: 64,
            num_blocks: 4,
            bidirectional: true,
            use_corrector: true,
            corrector_hidden_dim: 32,
            seed: 42,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        let (bi, corr) = variant.flags();
        self.bidirectional = bi;
        self.use_corrector = corr;
        self
    }

    pub fn variant(&self) -> Variant {
        Variant::from_flags(self.bidirectional, self.use_corrector)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("projection_dim", self.projection_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_blocks", self.num_blocks),
            ("corrector_hidden_dim", self.corrector_hidden_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.use_corrector && self.block_output_dim() < 2 {
            return Err(Error::Config(
                "corrected blocks need an output width of at least 2 for layer norm".into(),
            ));
        }
        Ok(())
    }

    /// 2 when bidirectional, else 1.
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn block_output_dim(&self) -> usize {
        self.directions() * self.hidden_dim
    }

    pub fn block_input_dim(&self, block: usize) -> usize {
        if block == 0 {
            self.projection_dim
        } else {
            self.block_output_dim()
        }
    }

    /// Width of the concatenated per-block summaries fed to the head.
    pub fn head_width(&self) -> usize {
        self.num_blocks * self.block_output_dim()
    }
}
