use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wanda,
    Sparsegpt,
    Gptq,
    Rtn,
    /// Activation-weighted per-channel scaling followed by round-to-nearest.
    Aws,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Wanda, Method::Sparsegpt, Method::Gptq, Method::Rtn, Method::Aws];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wanda => "wanda",
            Method::Sparsegpt => "sparsegpt",
            Method::Gptq => "gptq",
            Method::Rtn => "rtn",
            Method::Aws => "aws",
        }
    }

    pub fn is_pruning(self) -> bool {
        matches!(self, Method::Wanda | Method::Sparsegpt)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown compression method {s:?}")))
    }
}

/// Hyperparameters of one compression run. Missing JSON fields take the
/// method's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionConfig {
    pub method: Method,
    /// Zeros per group (the `n` of n:m).
    #[serde(default = "d_prune_n")]
    pub prune_n: usize,
    /// Group width along the input dimension (the `m` of n:m).
    #[serde(default = "d_prune_m")]
    pub prune_m: usize,
    #[serde(default = "d_bits")]
    pub bits: u32,
    /// Quantization group / lazy-update block width. Wanda uses 1.
    #[serde(default)]
    pub group_size: Option<usize>,
    #[serde(default = "d_damp")]
    pub dampening: f64,
    #[serde(default = "d_true")]
    pub symmetric: bool,
    #[serde(default = "d_true")]
    pub desc_act_order: bool,
    #[serde(default = "d_true")]
    pub true_sequential: bool,
    /// Extra attempts, each with ten times the dampening, after a failed
    /// Cholesky factorisation.
    #[serde(default = "d_retries")]
    pub damp_retries: usize,
    /// Step of the exponent grid searched by `aws`.
    #[serde(default = "d_alpha_step")]
    pub aws_alpha_step: f64,
}

fn d_prune_n() -> usize {
    2
}
fn d_prune_m() -> usize {
    4
}
fn d_bits() -> u32 {
    4
}
fn d_damp() -> f64 {
    0.01
}
fn d_true() -> bool {
    true
}
fn d_retries() -> usize {
    3
}
fn d_alpha_step() -> f64 {
    0.05
}

impl CompressionConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            prune_n: 2,
            prune_m: 4,
            bits: 4,
            group_size: None,
            dampening: 0.01,
            symmetric: true,
            desc_act_order: true,
            true_sequential: true,
            damp_retries: 3,
            aws_alpha_step: 0.05,
        }
    }

    /// Effective group size: 1 for wanda, 128 otherwise unless overridden.
    pub fn group_size(&self) -> usize {
        self.group_size
            .unwrap_or(if self.method == Method::Wanda { 1 } else { 128 })
    }

    pub fn validate(&self) -> Result<()> {
        require(self.prune_m >= 1 && self.prune_n < self.prune_m, || {
            format!("invalid {}:{} pattern", self.prune_n, self.prune_m)
        })?;
        require((2..=16).contains(&self.bits), || format!("unsupported bit width {}", self.bits))?;
        require(self.group_size() >= 1, || "group_size must be >= 1".into())?;
        require(self.dampening >= 0.0 && self.dampening.is_finite(), || {
            "dampening must be finite and >= 0".into()
        })?;
        require(self.symmetric, || "only symmetric quantization is supported".into())?;
        require(self.aws_alpha_step > 0.0 && self.aws_alpha_step <= 1.0, || {
            "aws_alpha_step must be in (0, 1]".into()
        })?;
        if self.method == Method::Wanda {
            require(self.group_size() == 1, || "wanda uses group size 1".into())?;
        }
        Ok(())
    }

    /// Largest representable level, `2^(bits-1) - 1`.
    pub fn qmax(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }
}
