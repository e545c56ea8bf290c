//! `gen-data`: write a synthetic corpus (manifest + PGM images).

use std::path::PathBuf;

use radgen_core::synth::{generate_synthetic_corpus, DifficultyProfile, GeneratorError};

use crate::args::Parsed;
use crate::{manifest, pgm, CliError};

const HELP: &str = "usage: radgen gen-data --n <studies> --seed <u64> --out <dir>
                   [--image-size <px>] [--noise <0..0.5>] [--max-fillers <n>]

Generates a synthetic study corpus under --out: manifest.jsonl plus one PGM
image per view. Pixels are quantized to 8 bits here, so downstream loads are
lossless. The same --n/--seed/profile always produce byte-identical output.";

pub fn run(args: &[String]) -> Result<(), CliError> {
    let p = Parsed::parse(
        args,
        &["--n", "--seed", "--out", "--image-size", "--noise", "--max-fillers"],
        &[],
        &[],
    )?;
    if p.help {
        println!("{HELP}");
        return Ok(());
    }
    let n: usize = p.num("--n")?;
    if n == 0 {
        return Err(CliError::Usage(String::from("--n must be at least 1")));
    }
    let seed: u64 = p.num_or("--seed", 0)?;
    let out = PathBuf::from(p.required("--out")?);
    let base = DifficultyProfile::default();
    let profile = DifficultyProfile {
        image_size: p.num_or("--image-size", base.image_size)?,
        noise: p.num_or("--noise", base.noise)?,
        max_fillers: p.num_or("--max-fillers", base.max_fillers)?,
    };

    let mut studies = generate_synthetic_corpus(n, seed, &profile).map_err(|e| match e {
        GeneratorError::EmptyCorpus | GeneratorError::InvalidProfile { .. } => {
            CliError::Usage(e.to_string())
        }
    })?;
    // Snap pixels onto the 8-bit storage grid before anything consumes them.
    for study in &mut studies {
        for view in &mut study.views {
            pgm::quantize_image(&mut view.image);
        }
    }
    manifest::save(&out, &studies)?;
    println!(
        "wrote {} studies to {}",
        studies.len(),
        out.join(manifest::MANIFEST_FILE).display()
    );
    Ok(())
}
