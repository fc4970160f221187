use std::io::Write;

use anyhow::Context;
use geomcheck::losses::{
    stage1_loss, stage2_loss, FlowPair, FramePrediction, FrameTruth, LossBreakdown, LossConfig,
};
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::inputs::{per_item, Paired};
use crate::output::{emit_json, json_text};
use crate::{LossArgs, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLoss {
    pub frame: usize,
    pub breakdown: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub command: String,
    pub config: LossConfig,
    pub stage1: Vec<FrameLoss>,
    /// Present when the ground truth has at least two frames and their flows.
    pub stage2: Option<LossBreakdown>,
}

pub fn loss(a: &LossArgs, pool: &ThreadPool, stdout: &mut dyn Write) -> anyhow::Result<Status> {
    let cfg = match &a.config {
        Some(p) => {
            LossConfig::load(p).with_context(|| format!("loading loss config {}", p.display()))?
        }
        None => LossConfig::default(),
    };
    if a.print_config {
        stdout.write_all(json_text(&cfg)?.as_bytes())?;
        return Ok(Status::Success);
    }
    let (Some(pred), Some(gt)) = (&a.pred, &a.gt) else {
        anyhow::bail!("--pred and --gt are required");
    };
    let pair = Paired::open(pred, gt)?;
    let n = pair.frames();
    let frames = per_item(pool, n, |k| {
        let p = FramePrediction {
            depth: pair.pred.depth(k)?,
            normals: pair.pred.normal(k)?,
            mask: pair.pred.mask(k)?,
        };
        let g = FrameTruth {
            depth: pair.gt.depth(k)?,
            normals: pair.gt.normal(k)?,
            mask: pair.gt.mask(k)?,
        };
        Ok((p, g))
    })?;
    let stage1 = per_item(pool, n, |k| {
        let breakdown = stage1_loss(&frames[k].0, &frames[k].1, &cfg)
            .with_context(|| format!("stage-1 loss for frame {k}"))?;
        Ok(FrameLoss {
            frame: k,
            breakdown,
        })
    })?;
    let stage2 = if pair.gt.manifest.has_flows() {
        let flows = per_item(pool, n - 1, |k| {
            Ok(FlowPair {
                fwd: pair.gt.flow_fwd(k)?,
                bwd: pair.gt.flow_bwd(k)?,
            })
        })?;
        let (preds, gts): (Vec<_>, Vec<_>) = frames.into_iter().unzip();
        Some(stage2_loss(&preds, &gts, &flows, &cfg).context("stage-2 loss")?)
    } else {
        None
    };
    let report = LossReport {
        command: "loss".into(),
        config: cfg,
        stage1,
        stage2,
    };
    emit_json(&report, a.json.as_deref(), stdout)?;
    Ok(Status::Success)
}
