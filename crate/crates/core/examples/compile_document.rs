//! Compiles a grounded plan into the executable JSON document and checks it
//! against the schema and the plan invariants.

use demo2plan::affordance::{ground, GroundingConfig};
use demo2plan::compiler::{compile, validate_document_str, CompileOptions, Provenance};
use demo2plan::gateway::TransportMode;
use demo2plan::perception::{synthesize_stream, SyntheticScript};
use demo2plan::planner::parse_plan;
use demo2plan::task_model::SceneDescription;

const PLAN: &str = r#"```json
{"task_sequence": ["Grab(cup)", "PickUp(cup)", "MoveHand(shelf)", "Put(cup, shelf)", "Release(cup)"],
 "step_explanations": ["", "", "", "", ""], "environment_after": {}, "summary": "Shelve the cup."}
```"#;

fn main() -> anyhow::Result<()> {
    let mut script = SyntheticScript::random_pick_and_place(5, "cup", &[]);
    script.skeleton = true;
    let syn = synthesize_stream(&script)?;
    let plan = parse_plan(PLAN)?;
    let scene = SceneDescription::implied_by(&plan.steps);
    let grounding = ground(&syn.stream, &plan.steps, &GroundingConfig::default())?;
    let options = CompileOptions {
        strict: true,
        provenance: Provenance { transport: TransportMode::Scripted.to_string(), model_id: "none".into(), ..Default::default() },
        ..Default::default()
    };
    let doc = compile("Put the cup on the shelf.", &scene, &plan, Some(&grounding), &options)?;
    let text = doc.to_canonical_json();
    println!("{text}");
    let report = validate_document_str(&text, true);
    eprintln!("valid: {} ({} schema, {} invariant errors)", report.is_valid(), report.schema_errors.len(), report.invariant_errors.len());
    Ok(())
}
