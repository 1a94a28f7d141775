//! Simulates a plan against a scene and prints each step's world state, then
//! shows how a missing Grab is reported.

use demo2plan::task_model::{validate_plan, Relation, SceneDescription, SceneObject, TaskStep, WorldState};

fn main() -> anyhow::Result<()> {
    let scene = SceneDescription {
        objects: vec![
            SceneObject { name: "juice".into(), graspable: true },
            SceneObject { name: "bottom shelf".into(), graspable: false },
            SceneObject { name: "top shelf".into(), graspable: false },
        ],
        relations: vec![Relation { subject: "juice".into(), relation: "on".into(), object: "bottom shelf".into() }],
        rationale: String::new(),
    };
    let plan: Vec<TaskStep> = ["Grab(juice)", "PickUp(juice)", "MoveHand(top shelf)", "Put(juice, top shelf)", "Release(juice)"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;

    let mut state = WorldState::from_scene(&scene);
    for step in &plan {
        state = state.apply(step).map_err(|e| anyhow::anyhow!("{step}: {e}"))?;
        println!("{step:<24} holding={:?}", state.holding);
    }
    let after = state.describe(&scene);
    for r in &after.relations {
        println!("after: {} {} {}", r.subject, r.relation, r.object);
    }

    let broken: Vec<TaskStep> = plan[1..].to_vec();
    let report = validate_plan(&scene, &broken);
    for v in &report.violations {
        println!("violation at step {}: {}", v.step_index, v.kind);
    }
    Ok(())
}
