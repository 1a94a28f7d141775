mod common;

use std::sync::Arc;

use common::*;
use demo2plan::compiler::{validate_document_str, ExecutableDocument};
use demo2plan::gateway::FixtureStore;
use demo2plan_service::job::AuditKind;
use demo2plan_service::{
    ArtifactKind, JobInputs, JobState, PipelineError, ReviewAction, ReviewRequest, ReviewStage, Stage,
};

fn review(action: ReviewAction, payload: Option<&str>) -> ReviewRequest {
    ReviewRequest { action, payload: payload.map(String::from), revision: None }
}

fn text_job(instruction: &str) -> JobInputs {
    JobInputs { instruction: Some(instruction.into()), ..Default::default() }
}

#[test]
fn video_and_stream_job_keeps_both_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(dir.path(), vec![]);
    let record = p.create_job(juice_inputs()).unwrap();
    assert_eq!(record.state, JobState::Created);
    assert_eq!(record.artifacts.frames.len(), 150);
    assert!(record.artifacts.stream.is_some());
    assert!(p.store().job_dir(&record.job_id).join("inputs/depth/000000.png").exists());
    assert_eq!(record.next_stage(), Some(Stage::AnalyzeVideo));
}

#[test]
fn job_without_video_or_instruction_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(dir.path(), vec![]);
    assert!(matches!(p.create_job(JobInputs::default()), Err(PipelineError::InvalidArgument(_))));
    assert!(matches!(p.create_job(text_job("   ")), Err(PipelineError::InvalidArgument(_))));
    let bad_stream = JobInputs { stream: Some(b"{not json".to_vec()), ..text_job("wipe the table") };
    assert!(matches!(p.create_job(bad_stream), Err(PipelineError::InvalidStream(_))));
    assert!(p.list().unwrap().is_empty());
}

#[test]
fn instruction_only_job_skips_video_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(dir.path(), vec![plan_response(&["Grab(cup)", "PickUp(cup)", "Put(cup, shelf)", "Release(cup)"])]);
    let id = p.create_job(text_job("Put the cup on the shelf.")).unwrap().job_id;
    assert_eq!(p.get(&id).unwrap().next_stage(), Some(Stage::Plan));
    let record = p.run_to_completion(&id, true).unwrap();
    assert_eq!(record.state, JobState::Compiled);
    let states: Vec<JobState> = record.audit_log.iter().map(|e| e.state).collect();
    assert!(!states.contains(&JobState::Analyzing));
    let doc = p.artifact(&id, ArtifactKind::Document).unwrap();
    assert!(validate_document_str(&doc, true).is_valid());
    let doc = ExecutableDocument::from_json(&doc, true).unwrap();
    assert!(doc.tasks.iter().all(|t| t.affordance.record().is_none()));
}

#[test]
fn drawer_feedback_replans_and_bumps_revision() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(
        dir.path(),
        vec![
            plan_response(&["Grab(safe)", "Slide(safe)", "Release(safe)"]),
            plan_response(&["Grab(drawer)", "Slide(drawer)", "Release(drawer)"]),
        ],
    );
    let id = p.create_job(text_job("Open it.")).unwrap().job_id;
    let record = p.advance(&id).unwrap();
    assert_eq!((record.state, record.review), (JobState::NeedsReview, Some(ReviewStage::Plan)));
    let before = record.revision;
    let record = p.submit_review(&id, &review(ReviewAction::Feedback, Some("it is a drawer, not a safe"))).unwrap();
    assert_eq!(record.revision, before + 1);
    let plan: serde_json::Value = serde_json::from_str(&p.artifact(&id, ArtifactKind::Plan).unwrap()).unwrap();
    assert_eq!(plan["steps"][0]["args"][0], "drawer");
    assert_eq!(plan["revision"], 1);
    assert!(record.audit_log.iter().any(|e| e.kind == AuditKind::FeedbackApplied && e.detail.contains("drawer")));
}

#[test]
fn approval_is_blocked_by_violations_and_empty_edits_fail() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(
        dir.path(),
        vec![
            plan_response(&["PickUp(cup)", "Release(cup)"]),
            plan_response(&["Grab(cup)", "PickUp(cup)", "Release(cup)"]),
        ],
    );
    let id = p.create_job(text_job("Lift the cup.")).unwrap().job_id;
    let record = p.advance(&id).unwrap();
    assert_eq!(record.violations.len(), 2);
    assert!(matches!(p.submit_review(&id, &review(ReviewAction::Approve, None)), Err(PipelineError::PendingViolations(2))));
    assert!(matches!(p.advance(&id), Err(PipelineError::InvalidState { .. })));
    assert!(matches!(
        p.submit_review(&id, &review(ReviewAction::EditInstruction, Some(" "))),
        Err(PipelineError::InvalidArgument(_))
    ));
    assert!(matches!(p.submit_review(&id, &review(ReviewAction::Feedback, None)), Err(PipelineError::InvalidArgument(_))));
    let record = p.submit_review(&id, &review(ReviewAction::Feedback, Some("grab it first"))).unwrap();
    assert!(record.violations.is_empty());
    p.submit_review(&id, &review(ReviewAction::Approve, None)).unwrap();
    let record = p.run_to_completion(&id, false).unwrap();
    assert_eq!(record.state, JobState::Compiled);
    assert!(matches!(p.advance(&id), Err(PipelineError::InvalidState { state: JobState::Compiled, .. })));
    assert!(matches!(p.submit_review(&id, &review(ReviewAction::Approve, None)), Err(PipelineError::InvalidState { .. })));
}

#[test]
fn edited_instruction_needs_fresh_approval() {
    let dir = tempfile::tempdir().unwrap();
    let responses = juice_responses();
    let p = scripted(dir.path(), responses.clone());
    let id = p.create_job(juice_inputs()).unwrap().job_id;
    let record = p.advance(&id).unwrap();
    assert_eq!(record.review, Some(ReviewStage::Instruction));
    assert_eq!(record.instruction.as_ref().unwrap().source, demo2plan::planner::InstructionSource::Model);
    let record = p.submit_review(&id, &review(ReviewAction::EditInstruction, Some("Move the juice up one shelf."))).unwrap();
    assert_eq!(record.revision, 1);
    assert_eq!(record.instruction.as_ref().unwrap().source, demo2plan::planner::InstructionSource::HumanEdited);
    assert_eq!(record.next_stage(), None);
    let record = p.submit_review(&id, &review(ReviewAction::Approve, None)).unwrap();
    assert_eq!(record.approvals(), vec!["instruction@1".to_string()]);
    assert_eq!(p.advance(&id).unwrap().review, Some(ReviewStage::Plan));
}

#[test]
fn anchor_mismatch_goes_to_review_and_can_be_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let mut responses = juice_responses();
    responses[2] = plan_response(&["Grab(juice)", "Release(juice)", "Grab(juice)", "Release(juice)"]);
    let p = scripted(dir.path(), responses);
    let id = p.create_job(juice_inputs()).unwrap().job_id;
    let record = p.run_to_completion(&id, true).unwrap();
    assert_eq!((record.state, record.review), (JobState::NeedsReview, Some(ReviewStage::Grounding)));
    let m = record.mismatch.clone().expect("mismatch recorded");
    assert_eq!((m.expected_grasps, m.found_grasps), (2, 1));
    assert!(matches!(p.submit_review(&id, &review(ReviewAction::Approve, None)), Err(PipelineError::InvalidArgument(_))));
    p.submit_review(&id, &review(ReviewAction::OverrideMismatch, Some("second grasp is off camera"))).unwrap();
    let record = p.advance(&id).unwrap();
    assert_eq!(record.state, JobState::Compiled);
    let doc = ExecutableDocument::from_json(&p.artifact(&id, ArtifactKind::Document).unwrap(), true).unwrap();
    assert!(doc.provenance.approvals.contains(&"mismatch_override@0".to_string()));
    assert!(doc.tasks.iter().all(|t| t.affordance.record().is_none()));
}

#[test]
fn provenance_is_rebuilt_from_the_audit_log() {
    let dir = tempfile::tempdir().unwrap();
    let p = replay(dir.path());
    let id = p.create_job(juice_inputs()).unwrap().job_id;
    let record = p.run_to_completion(&id, true).unwrap();
    assert_eq!(record.state, JobState::Compiled, "{:?}", record.last_error);
    let doc = ExecutableDocument::from_json(&p.artifact(&id, ArtifactKind::Document).unwrap(), true).unwrap();
    assert_eq!(doc.provenance, p.provenance(&record));
    let mut recorded: Vec<String> =
        FixtureStore::new(juice_dir().join("fixtures")).list().unwrap().into_iter().map(|f| f.request_hash).collect();
    let mut used = doc.provenance.fixture_hashes.clone();
    recorded.sort();
    used.sort();
    assert_eq!(used, recorded);
    assert_eq!(doc.provenance.approvals, vec!["instruction@0", "plan@0"]);
    assert!(doc.provenance.analyzer_config_digest.is_some());
}

#[test]
fn reloading_the_job_directory_reconstructs_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let p = scripted(dir.path(), juice_responses());
    let id = p.create_job(juice_inputs()).unwrap().job_id;
    loop {
        let record = p.get(&id).unwrap();
        let fresh = scripted(dir.path(), vec![]);
        assert_eq!(fresh.get(&id).unwrap(), record);
        if record.state == JobState::Compiled {
            break;
        }
        if record.next_stage().is_some() {
            p.advance(&id).unwrap();
        } else {
            p.submit_review(&id, &review(ReviewAction::Approve, None)).unwrap();
        }
    }
    // a stage cut short by a crash is failed on restart
    let id = p.create_job(text_job("Wipe the table.")).unwrap().job_id;
    p.begin_advance(&id).unwrap();
    let restarted = scripted(dir.path(), vec![]);
    assert_eq!(restarted.recover_interrupted().unwrap(), vec![id.clone()]);
    assert_eq!(restarted.get(&id).unwrap().state, JobState::Failed);
}

#[test]
fn concurrent_reviews_on_one_revision_have_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let p = Arc::new(scripted(dir.path(), vec![plan_response(&["Grab(cup)", "Release(cup)"])]));
    let id = p.create_job(text_job("Touch the cup.")).unwrap().job_id;
    let revision = p.advance(&id).unwrap().revision;
    let outcomes: Vec<Result<_, PipelineError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let (p, id) = (p.clone(), id.clone());
                s.spawn(move || {
                    let request = ReviewRequest {
                        action: ReviewAction::EditInstruction,
                        payload: Some(format!("Touch the cup, take {i}.")),
                        revision: Some(revision),
                    };
                    p.submit_review(&id, &request)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let winners = outcomes.iter().filter(|o| o.is_ok()).count();
    assert_eq!(winners, 1);
    assert!(outcomes.iter().filter_map(|o| o.as_ref().err()).all(|e| matches!(e, PipelineError::Conflict { .. })));
    assert_eq!(p.get(&id).unwrap().revision, revision + 1);
}

#[test]
fn stage_errors_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    // unparseable plan: recoverable, back to instruction review
    let p = scripted(dir.path(), vec!["I cannot help with that.".into()]);
    let id = p.create_job(text_job("Stack the plates.")).unwrap().job_id;
    let record = p.advance(&id).unwrap();
    assert_eq!((record.state, record.review), (JobState::NeedsReview, Some(ReviewStage::Instruction)));
    assert!(record.last_error.as_deref().unwrap().contains("fenced"));
    // the transport runs dry: unrecoverable
    p.submit_review(&id, &review(ReviewAction::Approve, None)).unwrap();
    let record = p.advance(&id).unwrap();
    assert_eq!(record.state, JobState::Failed);
    assert!(record.last_error.is_some());
    assert!(matches!(p.advance(&id), Err(PipelineError::InvalidState { .. })));
}
