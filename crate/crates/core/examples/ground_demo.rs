//! Grounds a five-step pick-and-place plan in a synthetic detection stream
//! and prints the anchors and the extracted affordances.

use demo2plan::affordance::{ground, GroundingConfig};
use demo2plan::perception::{synthesize_stream, SyntheticScript};
use demo2plan::task_model::TaskStep;

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let mut script = SyntheticScript::random_pick_and_place(seed, "cup", &["plate", "sponge"]);
    script.skeleton = true;
    let syn = synthesize_stream(&script)?;
    let plan: Vec<TaskStep> = ["Grab(cup)", "PickUp(cup)", "MoveHand(table)", "Put(cup, table)", "Release(cup)"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;

    let report = ground(&syn.stream, &plan, &GroundingConfig::default())?;
    println!("clips of {} frames, positions from {:?}", report.clip_length_frames, report.position_source);
    for (anchor, truth) in report.anchors.iter().zip(&syn.truth.anchors) {
        println!("{:?} of {} at frame {} (scripted {})", anchor.kind, anchor.object_label, anchor.frame_index, truth.frame);
    }
    for (step, slot) in plan.iter().zip(&report.affordances) {
        println!("{step:<18} {}", serde_json::to_string(slot)?);
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
