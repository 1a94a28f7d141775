//! Writes a synthetic demonstration to a directory: rendered frames, the
//! detection stream and 16-bit depth rasters.
//!
//! ```text
//! cargo run -p demo2plan --example synthesize_demo -- <out-dir> [seed]
//! ```
//! Without a seed the fixed juice-relocation demonstration is written.

use std::path::PathBuf;

use demo2plan::perception::{render_frame, synthesize_stream, write_depth_rasters, write_stream, SyntheticScript, Vec3};

fn juice_relocation() -> SyntheticScript {
    let mut s = SyntheticScript::pick_and_place(
        640,
        480,
        30.0,
        150,
        "juice",
        Vec3::new(0.25, 0.1, 0.9),
        Vec3::new(0.05, 0.15, 1.0),
        Vec3::new(-0.1, -0.15, 1.05),
        Vec3::new(0.1, -0.3, 0.85),
        45,
        105,
    )
    .object("cup", Vec3::new(0.3, 0.2, 1.0));
    s.skeleton = true;
    s.depth = true;
    s
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or_else(|| anyhow::anyhow!("usage: synthesize_demo <out-dir> [seed]"))?);
    let script = match args.next() {
        Some(seed) => {
            let mut s = SyntheticScript::random_pick_and_place(seed.parse()?, "cup", &["plate"]);
            s.depth = true;
            s
        }
        None => juice_relocation(),
    };
    let syn = synthesize_stream(&script)?;
    std::fs::create_dir_all(out.join("frames"))?;
    for frame in &syn.stream.frames {
        render_frame(&syn.stream.header, frame).save(out.join("frames").join(format!("{:05}.png", frame.frame_index)))?;
    }
    if let Some(depth) = &syn.depth {
        write_depth_rasters(&syn.stream, depth, &out)?;
    }
    write_stream(&syn.stream, &out.join("stream.jsonl"))?;
    std::fs::write(out.join("script.json"), serde_json::to_string_pretty(&script)?)?;
    println!("wrote {} frames to {}", syn.stream.frames.len(), out.display());
    Ok(())
}
