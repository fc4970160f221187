use std::path::Path;

use anyhow::{bail, Context};
use geomcheck::grids::Sequence;
use rayon::prelude::*;
use rayon::ThreadPool;

pub(crate) fn open(path: &Path, role: &str) -> anyhow::Result<Sequence> {
    Sequence::open(path).with_context(|| format!("opening {role} manifest {}", path.display()))
}

/// Prediction and ground-truth manifests with matching frame lists.
pub(crate) struct Paired {
    pub pred: Sequence,
    pub gt: Sequence,
}

impl Paired {
    pub fn open(pred: &Path, gt: &Path) -> anyhow::Result<Self> {
        let (pred, gt) = (open(pred, "prediction")?, open(gt, "ground-truth")?);
        let (p, g) = (&pred.manifest, &gt.manifest);
        if p.frame_count != g.frame_count {
            bail!(
                "prediction has {} frames, ground truth has {}",
                p.frame_count,
                g.frame_count
            );
        }
        if (p.width, p.height) != (g.width, g.height) {
            bail!(
                "prediction frames are {}x{}, ground truth frames are {}x{}",
                p.width,
                p.height,
                g.width,
                g.height
            );
        }
        Ok(Paired { pred, gt })
    }

    pub fn frames(&self) -> usize {
        self.gt.manifest.frame_count
    }
}

/// Runs `f` for every index on `pool`; results keep index order.
pub(crate) fn per_item<T: Send>(
    pool: &ThreadPool,
    n: usize,
    f: impl Fn(usize) -> anyhow::Result<T> + Sync + Send,
) -> anyhow::Result<Vec<T>> {
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}
