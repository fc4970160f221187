use std::io::Write;

use anyhow::{bail, Context};
use geomcheck::align::{
    apply_alignment, fit_scale_shift, fit_scale_shift_joint, supervision_weights, AlignmentParams,
};
use geomcheck::metrics::{
    aggregate_images, aggregate_pairs, check_thresholds, depth_metrics, normal_metrics,
    pair_metrics, FramePairRef, ImageRecord, ImageSummary, PairMetrics, VideoSummary,
};
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::inputs::{open, per_item, Paired};
use crate::output::{emit_json, num, write_csv};
use crate::{DepthAlignment, EvalImagesArgs, EvalVideoArgs, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesReport {
    pub command: String,
    pub aligned: bool,
    pub thresholds: Vec<f64>,
    pub summary: ImageSummary,
}

pub fn eval_images(
    a: &EvalImagesArgs,
    pool: &ThreadPool,
    stdout: &mut dyn Write,
) -> anyhow::Result<Status> {
    check_thresholds(&a.thresholds)?;
    let pair = Paired::open(&a.pred, &a.gt)?;
    let records = per_item(pool, pair.frames(), |k| {
        let mask = pair.gt.mask(k)?;
        let depth = depth_metrics(&pair.pred.depth(k)?, &pair.gt.depth(k)?, &mask, a.aligned)
            .with_context(|| format!("depth metrics for frame {k}"))?;
        let normal = normal_metrics(
            &pair.pred.normal(k)?,
            &pair.gt.normal(k)?,
            &mask,
            &a.thresholds,
        )
        .with_context(|| format!("normal metrics for frame {k}"))?;
        Ok(ImageRecord {
            frame: k,
            depth,
            normal,
        })
    })?;
    let summary = aggregate_images(&records, a.aggregation.into())?;

    if let Some(path) = &a.out.csv {
        let mut header: Vec<String> = [
            "frame",
            "rmse",
            "absrel",
            "depth_pixels",
            "absrel_pixels",
            "nonpositive_gt",
            "scale",
            "shift",
            "mean_deg",
            "median_deg",
        ]
        .map(String::from)
        .to_vec();
        header.extend(a.thresholds.iter().map(|t| format!("acc_{t}")));
        header.push("normal_pixels".into());
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                let (scale, shift) = r
                    .depth
                    .alignment
                    .map_or((String::new(), String::new()), |p| {
                        (num(p.scale), num(p.shift))
                    });
                let mut row = vec![
                    r.frame.to_string(),
                    num(r.depth.rmse),
                    num(r.depth.absrel),
                    r.depth.pixel_count.to_string(),
                    r.depth.absrel_count.to_string(),
                    r.depth.nonpositive_gt.to_string(),
                    scale,
                    shift,
                    num(r.normal.mean_deg),
                    num(r.normal.median_deg),
                ];
                row.extend(r.normal.acc.iter().map(|e| num(e.fraction)));
                row.push(r.normal.pixel_count.to_string());
                row
            })
            .collect();
        write_csv(path, &header, &rows)?;
    }
    let report = ImagesReport {
        command: "eval-images".into(),
        aligned: a.aligned,
        thresholds: a.thresholds.clone(),
        summary,
    };
    emit_json(&report, a.out.json.as_deref(), stdout)?;
    Ok(Status::Success)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub command: String,
    pub depth_alignment: String,
    /// One entry per frame for per-frame alignment, one for the whole sequence
    /// for per-sequence alignment, none without alignment.
    pub alignment: Vec<AlignmentParams>,
    pub summary: VideoSummary,
}

pub fn eval_video(
    a: &EvalVideoArgs,
    pool: &ThreadPool,
    stdout: &mut dyn Write,
) -> anyhow::Result<Status> {
    let pair = Paired::open(&a.pred, &a.gt)?;
    let n = pair.frames();
    if n < 2 {
        bail!("temporal metrics need at least 2 frames, the sequence has {n}");
    }
    let external = a.flows.as_deref().map(|p| open(p, "flow")).transpose()?;
    let flows = external.as_ref().unwrap_or(&pair.gt);
    let listed = flows.manifest.flow_fwd.len();
    if listed < n - 1 {
        bail!(
            "missing flow pairs: {n} frames need {} forward flows, the manifest lists {listed}",
            n - 1
        );
    }

    let depths = per_item(pool, n, |k| {
        Ok((pair.pred.depth(k)?, pair.gt.depth(k)?, pair.gt.mask(k)?))
    })?;
    let weights: Vec<_> = depths
        .iter()
        .map(|(_, _, m)| supervision_weights(m))
        .collect();
    let alignment: Vec<AlignmentParams> = match a.depth_alignment {
        DepthAlignment::None => Vec::new(),
        DepthAlignment::PerFrame => per_item(pool, n, |k| {
            Ok(fit_scale_shift(&depths[k].0, &depths[k].1, &weights[k])?)
        })?,
        DepthAlignment::PerSequence => {
            let frames: Vec<_> = depths
                .iter()
                .zip(&weights)
                .map(|((p, g, _), w)| (p, g, w))
                .collect();
            vec![fit_scale_shift_joint(&frames)?]
        }
    };
    let pred_depth: Vec<_> = depths
        .iter()
        .enumerate()
        .map(|(k, (p, _, _))| match a.depth_alignment {
            DepthAlignment::None => p.clone(),
            DepthAlignment::PerFrame => apply_alignment(p, &alignment[k]),
            DepthAlignment::PerSequence => apply_alignment(p, &alignment[0]),
        })
        .collect();
    let normals = per_item(pool, n, |k| Ok((pair.pred.normal(k)?, pair.gt.normal(k)?)))?;

    let records: Vec<PairMetrics> = per_item(pool, n - 1, |k| {
        let fwd = flows.flow_fwd(k)?;
        let r = pair_metrics(
            k,
            FramePairRef(&pred_depth[k], &pred_depth[k + 1]),
            FramePairRef(&normals[k].0, &normals[k + 1].0),
            FramePairRef(&normals[k].1, &normals[k + 1].1),
            &fwd,
            Some(&depths[k].2),
        )
        .with_context(|| format!("temporal metrics for pair {k}"))?;
        Ok(r)
    })?;
    let summary = aggregate_pairs(&records)?;

    if let Some(path) = &a.out.csv {
        let header = [
            "pair",
            "opw",
            "tc_rmse",
            "depth_pixels",
            "opw_normal",
            "tc_mean_deg",
            "tc_abs_deg",
            "normal_pixels",
        ]
        .map(String::from)
        .to_vec();
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.pair.to_string(),
                    num(r.opw),
                    num(r.tc_rmse),
                    r.depth_pixels.to_string(),
                    num(r.opw_normal),
                    num(r.tc_mean_deg),
                    num(r.tc_abs_deg),
                    r.normal_pixels.to_string(),
                ]
            })
            .collect();
        write_csv(path, &header, &rows)?;
    }
    let report = VideoReport {
        command: "eval-video".into(),
        depth_alignment: serde_json::to_value(a.depth_alignment)?
            .as_str()
            .unwrap_or_default()
            .to_owned(),
        alignment,
        summary,
    };
    emit_json(&report, a.out.json.as_deref(), stdout)?;
    Ok(Status::Success)
}
