use std::io::Write;

use anyhow::bail;
use geomcheck::features::{
    cwa_finite_difference, cwa_grad, default_hidden, max_relative_error, CwaParams, FeatureVolume,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::output::json_text;
use crate::{GradcheckArgs, Status};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckInstance {
    pub seed: u64,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub command: String,
    pub channels: usize,
    pub hidden: usize,
    pub height: usize,
    pub width: usize,
    pub step: f64,
    pub tolerance: f64,
    pub zero_upstream: bool,
    pub instances: Vec<GradcheckInstance>,
    pub max_rel_error: f64,
    pub pass: bool,
}

pub fn gradcheck(a: &GradcheckArgs, stdout: &mut dyn Write) -> anyhow::Result<Status> {
    let hidden = a.hidden.unwrap_or_else(|| default_hidden(a.channels));
    if a.channels == 0 || hidden == 0 || a.height == 0 || a.width == 0 {
        bail!("channels, hidden, height and width must all be >= 1");
    }
    if !(a.step > 0.0 && a.step.is_finite()) {
        bail!("--step must be a positive finite number, got {}", a.step);
    }
    let mut instances = Vec::new();
    for seed in a.seed..a.seed + a.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureVolume::random(a.channels, a.height, a.width, &mut rng);
        let p = CwaParams::random(a.channels, hidden, &mut rng);
        let upstream = if a.zero_upstream {
            FeatureVolume::zeros(a.channels, a.height, a.width)
        } else {
            FeatureVolume::random(a.channels, a.height, a.width, &mut rng)
        };
        let mut analytic = cwa_grad(&f, &p, &upstream, false)?;
        if a.corrupt {
            analytic.input.values[0] += 0.1 + 0.5 * analytic.input.values[0].abs();
        }
        let numeric = cwa_finite_difference(&f, &p, &upstream, a.step)?;
        instances.push(GradcheckInstance {
            seed,
            max_rel_error: max_relative_error(&analytic, &numeric),
        });
    }
    let max_rel_error = instances
        .iter()
        .map(|i| i.max_rel_error)
        .fold(0.0, f64::max);
    let pass = max_rel_error < a.tolerance;
    let report = GradcheckReport {
        command: "gradcheck".into(),
        channels: a.channels,
        hidden,
        height: a.height,
        width: a.width,
        step: a.step,
        tolerance: a.tolerance,
        zero_upstream: a.zero_upstream,
        instances,
        max_rel_error,
        pass,
    };
    stdout.write_all(json_text(&report)?.as_bytes())?;
    Ok(if pass {
        Status::Success
    } else {
        Status::CheckFailed
    })
}
