use serde::Serialize;

use super::VerificationRequest;
use crate::taxonomy::{render_text_block, ErrorType, NO_ERROR};

pub const ROLE_DEFINITION: &str = "You are an Advanced AI Reasoning Verification Expert. \
Your sole task is to objectively evaluate the logical correctness of thought chains.";

pub const CALIBRATION_RULES: [&str; 2] = [
    "Evaluate only the current step (the step at current_step_index). The preceding steps have already \
been verified; use them as context but do not re-audit them or report errors located in them.",
    "Do not flag speculative language, hypotheses, or self-questioning (for example \"Maybe X is true\" \
or \"Is Y possible?\") as errors. Exploratory uncertainty is a legitimate part of extended reasoning; \
only statements presented as definitive conclusions are subject to error classification.",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PromptOptions {
    /// Send at most this many preceding steps; `None` sends the full history.
    pub max_prior_steps: Option<usize>,
}

#[derive(Serialize)]
struct PromptInput<'a> {
    problem: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    background: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps_offset: Option<usize>,
    steps: Vec<&'a str>,
    current_step_index: usize,
}

pub fn build_prompt(request: &VerificationRequest, taxonomy: &[ErrorType]) -> String {
    build_prompt_with(request, taxonomy, PromptOptions::default())
}

/// Assemble the five prompt sections: role, taxonomy, input, output schema,
/// calibration rules. Output is a pure function of the arguments.
pub fn build_prompt_with(request: &VerificationRequest, taxonomy: &[ErrorType], options: PromptOptions) -> String {
    let skip = options
        .max_prior_steps
        .map_or(0, |cap| request.prior_steps.len().saturating_sub(cap));
    let mut steps: Vec<&str> = request.prior_steps[skip..].iter().map(String::as_str).collect();
    steps.push(&request.current_step);
    let input = PromptInput {
        problem: &request.problem,
        background: request.background.as_deref(),
        steps_offset: (skip > 0).then_some(skip),
        steps,
        current_step_index: request.current_index,
    };
    let input_json = serde_json::to_string_pretty(&input).expect("prompt input serializes");
    let codes: Vec<&str> = taxonomy.iter().map(|t| t.code.as_str()).collect();

    let mut out = String::new();
    out.push_str(ROLE_DEFINITION);
    out.push_str("\n\n## Error taxonomy\n\n");
    out.push_str(render_text_block(taxonomy).trim_end());
    out.push_str("\n\n## Input\n\n");
    out.push_str(
        "The reasoning chain is given as JSON. `steps` lists the reasoning steps in order, up to and \
including the step under evaluation",
    );
    if skip > 0 {
        out.push_str("; the first listed step has index `steps_offset`");
    }
    out.push_str(". `current_step_index` is the 0-based index of the step to evaluate.\n\n```json\n");
    out.push_str(&input_json);
    out.push_str("\n```\n\n## Output\n\n");
    out.push_str(&format!(
        "Respond exclusively with one JSON object with exactly these fields:\n\
```json\n\
{{\"flag\": \"safe\" | \"unsafe\", \"error_type\": {} | \"{NO_ERROR}\", \"confidence\": <number in [0, 1]>, \
\"quote\": <string>, \"explanation\": <string>}}\n\
```\n\
When flag is \"unsafe\", error_type is one code from the taxonomy, quote is a verbatim excerpt of the current \
step locating the error, and explanation briefly states the problem. When flag is \"safe\", error_type is \
\"{NO_ERROR}\" and quote and explanation are empty strings.\n\n",
        codes.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(" | ")
    ));
    out.push_str("## Rules\n\n");
    for (i, rule) in CALIBRATION_RULES.iter().enumerate() {
        out.push_str(&format!("{}. {rule}\n", i + 1));
    }
    out
}
