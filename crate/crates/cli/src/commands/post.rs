use anyhow::Result;
use tapgroove::post::apply_post_chain;
use tapgroove::{load_wav, save_wav};

use super::ensure_parent;
use crate::args::{required, PostArgs};
use crate::manifest::{manifest_path, Run};

pub fn apply(args: PostArgs, seed: u64) -> Result<()> {
    let input = required(&args.input, "--in")?;
    let out = required(&args.out, "--out")?;
    let chain = args.chain.clone().unwrap_or_default();
    let mut run = Run::start("post apply", seed, &chain)?;
    run.input("audio", &input);
    let processed = apply_post_chain(&load_wav(&input)?, &chain)?;
    ensure_parent(&out)?;
    save_wav(&processed, &out)?;
    run.output("audio", &out);
    run.finish(&manifest_path(&out))
}
