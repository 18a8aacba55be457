//! Training configuration: flags over config file over defaults.
//!
//! The config file is TOML with the keys of [`ConfigFile`]:
//!
//! ```toml
//! loss = "ova-bce"
//! variant = "unbiased"
//! l2 = 1e-3
//! epochs_phase1 = 15
//! lr_phase1 = 1e-4
//! epochs_phase2 = 5
//! lr_phase2 = 1e-5
//! batch_size = 512
//! seed = 0
//! l2_grid = [1e-4, 1e-3, 1e-2]
//! ```

use std::path::Path;

use pslosses_core::train::{AdamParams, Link};
use pslosses_core::{Reduction, UpperBoundForm, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::args::TrainOverrides;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub loss: Option<String>,
    pub variant: Option<String>,
    pub upper_bound_form: Option<UpperBoundForm>,
    pub link: Option<Link>,
    pub l2: Option<f64>,
    pub epochs_phase1: Option<usize>,
    pub lr_phase1: Option<f64>,
    pub epochs_phase2: Option<usize>,
    pub lr_phase2: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub pretrain_vanilla_epochs: Option<usize>,
    pub adam_beta1: Option<f64>,
    pub adam_beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub l2_grid: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.message().to_string() })
    }
}

pub const DEFAULT_LOSS: &str = "ova-bce";

/// The effective training configuration and the regularization grid
/// (`None` when no grid was given).
pub fn resolve(o: &TrainOverrides) -> CliResult<(TrainConfig, Option<Vec<f64>>)> {
    let file = match &o.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let kind = o.loss.as_deref().or(file.loss.as_deref()).unwrap_or(DEFAULT_LOSS);
    let mut loss: Reduction = Reduction::new(kind.parse()?, Variant::Unbiased);
    if let Some(v) = o.variant.as_deref().or(file.variant.as_deref()) {
        loss.variant = v.parse()?;
    }
    if let Some(t) = file.upper_bound_form {
        loss.upper_bound_form = t;
    }

    let mut cfg = TrainConfig::new(loss);
    macro_rules! pick {
        ($field:ident) => {
            if let Some(v) = o.$field.or(file.$field) {
                cfg.$field = v;
            }
        };
    }
    pick!(l2);
    pick!(epochs_phase1);
    pick!(lr_phase1);
    pick!(epochs_phase2);
    pick!(lr_phase2);
    pick!(batch_size);
    pick!(seed);
    pick!(pretrain_vanilla_epochs);
    cfg.link = file.link;
    let defaults = AdamParams::default();
    cfg.adam = AdamParams {
        beta1: file.adam_beta1.unwrap_or(defaults.beta1),
        beta2: file.adam_beta2.unwrap_or(defaults.beta2),
        eps: file.adam_eps.unwrap_or(defaults.eps),
    };
    cfg.validate()?;

    let grid = match &o.sweep {
        Some(spec) => Some(parse_sweep(spec)?),
        None => file.l2_grid,
    };
    if let Some(g) = &grid {
        if g.is_empty() || g.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(CliError::usage("the l2 grid needs non-negative finite values"));
        }
    }
    Ok((cfg, grid))
}

/// Parses `l2=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> CliResult<Vec<f64>> {
    let (key, values) =
        spec.split_once('=').ok_or_else(|| CliError::usage(format!("expected --sweep l2=v1,v2,..., got '{spec}'")))?;
    if key.trim() != "l2" {
        return Err(CliError::usage(format!("only l2 can be swept, got '{key}'")));
    }
    values
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad grid value '{v}'"))))
        .collect()
}
