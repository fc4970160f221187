use std::io::Write;

use anyhow::Context;
use geomcheck::synth::{generate_sequence, make_walker, WalkerConfig, MANIFEST_NAME};

use crate::{GenSynthArgs, Status};

pub fn gen_synth(a: &GenSynthArgs, stdout: &mut dyn Write) -> anyhow::Result<Status> {
    let size = a.size as usize;
    let cfg = WalkerConfig {
        width: size,
        height: size,
        ..WalkerConfig::default()
    };
    let scene = make_walker(a.seed, a.frames as usize, &cfg);
    generate_sequence(&scene, &a.out)
        .with_context(|| format!("writing sequence to {}", a.out.display()))?;
    writeln!(stdout, "{}", a.out.join(MANIFEST_NAME).display())?;
    Ok(Status::Success)
}
