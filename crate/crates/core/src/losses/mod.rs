//! Training objectives and their analytic gradients.
//!
//! Every loss returns its value together with gradients w.r.t. the model
//! outputs it reads (`S`, `A`, `P` or the embeddings `Z`).

mod contrastive;
mod point;
mod video;

use serde::{Deserialize, Serialize};

pub use contrastive::{contrastive_loss, ContrastiveConfig, ContrastiveLoss, LabeledEmbedding, PrototypeBank};
pub use point::{point_loss, PointLoss};
pub use video::{
    bottomk_pool_logit, pool_size, topk_pool_logit, video_label, video_loss, Pooled, VideoLoss,
    VideoLossConfig,
};

/// Loss components of one iteration (batch means for the per-video terms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossReport {
    pub l_pt_fg: f64,
    pub l_pt_bg: f64,
    pub l_vid_pos: f64,
    pub l_vid_neg: f64,
    pub l_pascl: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(l_pt_fg: f64, l_pt_bg: f64, l_vid_pos: f64, l_vid_neg: f64, l_pascl: f64, lambda_vid: f64, lambda_pascl: f64) -> Self {
        Self {
            l_pt_fg,
            l_pt_bg,
            l_vid_pos,
            l_vid_neg,
            l_pascl,
            total: (l_pt_fg + l_pt_bg) + lambda_vid * (l_vid_pos + l_vid_neg) + lambda_pascl * l_pascl,
        }
    }

    pub fn point(&self) -> f64 {
        self.l_pt_fg + self.l_pt_bg
    }

    pub fn video(&self) -> f64 {
        self.l_vid_pos + self.l_vid_neg
    }

    pub fn is_finite(&self) -> bool {
        [self.l_pt_fg, self.l_pt_bg, self.l_vid_pos, self.l_vid_neg, self.l_pascl, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}
