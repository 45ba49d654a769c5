//! Student networks that stand in for attention, and how they are sized.

mod ffnet;
mod method;
mod size;
mod table;
pub mod transform;

pub use ffnet::{build_replacement, FFNet, FFReplacementSpec, Student, StudentSet, STUDENT_FORMAT};
pub use method::ReplacementMethod;
pub use table::{budget_table, render_budget_table, BudgetRow};
pub use size::{hidden_width_for_budget, param_count, SizeClass, SizeLabel, SizeLadder, REFERENCE_WIDTH};
