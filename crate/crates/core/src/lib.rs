//! Demonstration-to-plan pipeline: a vision-language model turns a human
//! demonstration into a symbolic task plan, and a geometric analyzer grounds
//! each task in the recorded hand trajectory to produce a robot-independent
//! executable document.

pub mod affordance;
pub mod canonical;
pub mod compiler;
pub mod eval;
pub mod gateway;
pub mod perception;
pub mod planner;
pub mod task_model;
