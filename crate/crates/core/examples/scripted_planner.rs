//! Runs the three prompting stages against canned model answers, records
//! them as fixtures, and replays the same session from the fixtures alone.

use demo2plan::gateway::{encode_frame, FixtureStore, RecordingTransport, ReplayTransport, ScriptedTransport, Transport};
use demo2plan::perception::{render_frame, synthesize_stream, SyntheticScript};
use demo2plan::planner::{PlannerOutput, SymbolicPlanner};

const INSTRUCTION: &str = r#"```json
{"instruction": "Grab the cup on the table, move it to the right and put it down."}
```"#;
const SCENE: &str = r#"```json
{"objects": [{"name": "cup", "graspable": true}, {"name": "table", "graspable": false}],
 "relations": [["cup", "on", "table"]], "rationale": "the cup is the only moved object"}
```"#;
const PLAN: &str = r#"```json
{"task_sequence": ["Grab(cup)", "PickUp(cup)", "MoveHand(table)", "Put(cup, table)", "Release(cup)"],
 "step_explanations": ["hold the cup", "lift it", "carry it right", "set it down", "let go"],
 "environment_after": {"objects": ["cup", "table"], "relations": [["cup", "on", "table"]]},
 "summary": "Moves the cup along the table."}
```"#;

fn run(planner: &SymbolicPlanner, transport: &dyn Transport) -> anyhow::Result<PlannerOutput> {
    let syn = synthesize_stream(&SyntheticScript::random_pick_and_place(3, "cup", &[]))?;
    let frames: Vec<_> = [0, 60, 120, 180, 239]
        .iter()
        .map(|&i| {
            let mut png = Vec::new();
            render_frame(&syn.stream.header, &syn.stream.frames[i])
                .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)?;
            Ok(encode_frame(&png, 448)?)
        })
        .collect::<anyhow::Result<_>>()?;
    let mut session = planner.new_session(8192);
    let instruction = planner.analyze_video(&frames, &mut session, transport)?;
    let scene = planner.analyze_scene(&frames[0], &instruction, &mut session, transport)?;
    Ok(planner.plan_tasks(&instruction, Some(&scene), &mut session, transport)?)
}

fn main() -> anyhow::Result<()> {
    let planner = SymbolicPlanner::default();
    let dir = tempfile::tempdir()?;
    let store = FixtureStore::new(dir.path());

    let recorder = RecordingTransport::new(ScriptedTransport::new([INSTRUCTION, SCENE, PLAN]), store.clone());
    let recorded = run(&planner, &recorder)?;
    println!("recorded {} fixtures", store.list()?.len());

    let replayed = run(&planner, &ReplayTransport::new(store))?;
    assert_eq!(recorded.steps, replayed.steps);
    for (step, why) in replayed.steps.iter().zip(&replayed.step_explanations) {
        println!("{step:<20} {why}");
    }
    println!("violations: {}", replayed.violations.len());
    Ok(())
}
