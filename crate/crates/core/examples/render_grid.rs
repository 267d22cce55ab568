//! Writes the exact marginal of the maximum-entropy GFN on a 2-D hypergrid as a
//! PGM image and a CSV matrix.
//!
//! `cargo run --example render_grid -- [side] [out_dir]`

use maxent_gfn::cli::{
    build_mdp, exact_policy, grid_field, pgm, EnvConfig, ExactBackward, GridField,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let side: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(16);
    let out = std::path::PathBuf::from(args.get(1).cloned().unwrap_or_else(|| ".".into()));
    let env = EnvConfig {
        name: "hypergrid".into(),
        dims: 2,
        side,
        ..EnvConfig::default()
    };
    let mdp = build_mdp(&env)?;
    let policy = exact_policy(&mdp, ExactBackward::Maxent)?;
    let (raw, image) = grid_field(&mdp, &env, GridField::Marginal, &policy)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("marginal.pgm"), pgm(side, side, &image))?;
    let csv: String = raw
        .chunks(side)
        .map(|row| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect();
    std::fs::write(out.join("marginal.csv"), csv)?;
    println!(
        "mass {:.12} written to {}",
        raw.iter().sum::<f64>(),
        out.display()
    );
    Ok(())
}
