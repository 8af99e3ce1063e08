//! Third pipeline stage: turns task plans into validated device commands.
//!
//! Resolution is rule-based first; the model is only asked to settle steps
//! the home cannot disambiguate on its own, and whatever it answers passes
//! the same validation as every other command.

mod compile;
mod extract;
mod validate;

pub use compile::{
    assign_rooms, compile_plan, evaluate_attempt, proposal, retry_with_feedback, Attempt,
    CompileFailure, CompiledPlan, RetryExhausted, RETRY_BUDGET,
};
pub use extract::{extract_json, ExtractionReport, Outcome, Repair};
pub use validate::{
    check_command, command_shape, validate_commands, Rejection, RejectionReason, Validation,
};
