use anyhow::Result;
use serde_json::json;
use tapgroove::rhythm::{transcribe_rhythm, TranscribeConfig};
use tapgroove::load_wav;

use super::ensure_parent;
use crate::args::{required, ExtractArgs};
use crate::manifest::{manifest_path, sibling, Run};

pub fn extract(args: ExtractArgs, seed: u64) -> Result<()> {
    let input = required(&args.input, "--in")?;
    let out = required(&args.out, "--out")?;
    let defaults = TranscribeConfig::default();
    let config = TranscribeConfig {
        components: args.k.unwrap_or(defaults.components),
        iterations: args.iterations.unwrap_or(defaults.iterations),
        seed,
        ..defaults
    };
    let mut run = Run::start("rhythm extract", seed, &config)?;
    run.input("prompt", &input);

    let buf = load_wav(&input)?;
    let track = transcribe_rhythm(&buf, &config)?;
    ensure_parent(&out)?;
    let json_out = sibling(&out, "json");
    track.write_csv(&out)?;
    track.write_json(&json_out)?;
    run.output("events_csv", &out);
    run.output("events_json", &json_out);
    run.details(json!({ "events": track.len(), "duration_sec": track.duration_sec() }));
    run.finish(&manifest_path(&out))?;
    println!("{} events -> {}", track.len(), out.display());
    Ok(())
}
