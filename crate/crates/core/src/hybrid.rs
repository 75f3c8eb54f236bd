//! Hybrid pipeline: forward-forward pretraining of the hidden stack,
//! then a backpropagation stage that trains the softmax head (and
//! optionally fine-tunes everything) on top of the learned features.

use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::Result;
use crate::history::RunHistory;
use crate::network::{InputPolicy, Network};
use crate::train_bp::{train_bp, BpState, TrainConfig, TrainScope};
use crate::train_ffa::{train_ffa, FfaConfig, FfaState};

/// Stage-2 parameter scope. `HeadOnly` (default) keeps the
/// forward-forward features frozen and reads out with a linear softmax;
/// `FullFinetune` lets backprop adjust the whole stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Scope {
    #[default]
    HeadOnly,
    FullFinetune,
}

/// How stage 2 treats the label-overlay region of the input. `Neutral`
/// (default) zeroes it so the classifier cannot read label pixels;
/// `TrueLabel` embeds the ground-truth label during training, which
/// matches the pretraining distribution but degrades to zeroing at
/// inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Overlay {
    #[default]
    Neutral,
    TrueLabel,
}

#[derive(Debug, Clone)]
pub struct HybridConfig {
    pub ffa: FfaConfig,
    pub bp: TrainConfig,
    pub scope: Stage2Scope,
    pub overlay: Stage2Overlay,
}

impl HybridConfig {
    pub fn new(ffa: FfaConfig, bp: TrainConfig) -> Self {
        HybridConfig {
            ffa,
            bp,
            scope: Stage2Scope::default(),
            overlay: Stage2Overlay::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ffa.validate()?;
        self.bp.validate()
    }
}

/// Histories of the two stages.
pub struct HybridOutcome {
    pub ffa_history: RunHistory,
    pub bp_history: RunHistory,
}

/// Runs forward-forward pretraining, then the backprop stage under the
/// configured scope and input policy. The network's `input_policy` is
/// set before stage 2 and stays set, so checkpoints and later inference
/// agree with how the classifier was trained.
pub fn train_hybrid(
    net: &mut Network,
    data: &DatasetSplit,
    cfg: &HybridConfig,
) -> Result<HybridOutcome> {
    cfg.validate()?;

    let mut ffa_state = FfaState::fresh(net, &cfg.ffa);
    let ffa_history = train_ffa(net, data, &cfg.ffa, &mut ffa_state)?;

    net.input_policy = match cfg.overlay {
        Stage2Overlay::Neutral => InputPolicy::ZeroFirstN,
        Stage2Overlay::TrueLabel => InputPolicy::TrueLabelOverlay,
    };
    let mut bp_cfg = cfg.bp.clone();
    bp_cfg.scope = match cfg.scope {
        Stage2Scope::HeadOnly => TrainScope::HeadOnly,
        Stage2Scope::FullFinetune => TrainScope::Full,
    };
    let mut bp_state = BpState::fresh(net, &bp_cfg);
    let bp_history = train_bp(net, data, &bp_cfg, &mut bp_state)?;

    Ok(HybridOutcome {
        ffa_history,
        bp_history,
    })
}
