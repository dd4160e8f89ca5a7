//! Prompt template for the LLM engine. Rendering is a pure function of the
//! template version and the command text.

use crate::error::{Error, Result};
use crate::feature::vocabulary_names;

pub const TEMPLATE_VERSION: &str = "v1";

const GLOSSARY: &str = "\
You translate a CAD designer's spoken or typed instruction into a structured edit command.

Terminology:
- Feature: a group of faces machined into the stock, such as a slot, hole, pocket, step or notch.
- Through slot / through hole: the cut passes all the way through the part.
- Blind slot / blind hole: the cut stops at a floor inside the part.
- Pocket: a closed recess with a floor and four walls.
- Step: a rectangular cut removing a corner edge along the full length.
- Side notch: a rectangular cut into one side face.
- Axes: X points right, Y points forward, Z points up. Distances are millimeters, angles are degrees.
- Direction words: right/left = +X/-X, forward/back = +Y/-Y, up/down = +Z/-Z. When the instruction also names an axis, the direction word only gives the sign.
- Rotation: about the named axis (Z if none), counterclockwise positive; clockwise means a negative angle.";

const STEPS: &str = "\
Work through the instruction in five steps.
[STEP 1] Feature types: list every feature the instruction refers to and map each to one of the allowed feature types. A pronoun such as \"it\" refers to the most recent feature.
[STEP 2] Operation types: for each feature, identify the operations requested, in the order they are given. Allowed operations: move, rotate, delete, resize.
[STEP 3] Parameters: extract the parameters of each operation. move needs axis, sign and distance_mm; rotate needs axis and angle_deg; delete has none; resize needs factor.
[STEP 4] JSON: write one JSON object following the output schema, with one entry per operation in instruction order.
[STEP 5] Verification: re-read the instruction and conduct self-verification to ensure every feature, operation and parameter is captured exactly once with the right sign and unit. Set \"verified\" to true only if the check passes.";

const SCHEMA: &str = r#"Output schema (reply with the reasoning, then exactly one JSON object):
{"commands": [{"feature": {"type": <feature type>, "hint": <optional short description>},
               "operation": {"type": "move" | "rotate" | "delete" | "resize",
                             "parameters": {"axis": "X"|"Y"|"Z", "sign": "+"|"-", "distance_mm": <number > 0>}
                                         | {"axis": "X"|"Y"|"Z", "angle_deg": <number, nonzero, between -360 and 360>}
                                         | {}
                                         | {"factor": <number > 0>}}}],
 "verified": true | false}"#;

const EXAMPLES: &str = r#"Example 1 (multi-step instruction)
Instruction: rotate the pocket 90 degrees and then move it 5 mm to the right
Feature types: pocket.
Operations: rotate, then move.
Parameters: rotate about Z by 90; move along X, sign +, 5 mm.
{"commands": [{"feature": {"type": "pocket"}, "operation": {"type": "rotate", "parameters": {"axis": "Z", "angle_deg": 90}}},
              {"feature": {"type": "pocket"}, "operation": {"type": "move", "parameters": {"axis": "X", "sign": "+", "distance_mm": 5}}}],
 "verified": true}

Example 2 (two features)
Instruction: delete the blind hole and shrink the through slot by 20%
Feature types: circular_blind_hole, rect_through_slot.
Operations: delete; resize.
Parameters: delete has none; shrinking by 20% keeps 80%, factor 0.8.
{"commands": [{"feature": {"type": "circular_blind_hole"}, "operation": {"type": "delete", "parameters": {}}},
              {"feature": {"type": "rect_through_slot"}, "operation": {"type": "resize", "parameters": {"factor": 0.8}}}],
 "verified": true}

Example 3 (three operations)
Instruction: move the step 2 mm back, turn it 15 degrees clockwise about X, then double it
Feature types: step.
Operations: move, rotate, resize.
Parameters: back is -Y, 2 mm; clockwise about X is -15; double is factor 2.
{"commands": [{"feature": {"type": "step"}, "operation": {"type": "move", "parameters": {"axis": "Y", "sign": "-", "distance_mm": 2}}},
              {"feature": {"type": "step"}, "operation": {"type": "rotate", "parameters": {"axis": "X", "angle_deg": -15}}},
              {"feature": {"type": "step"}, "operation": {"type": "resize", "parameters": {"factor": 2}}}],
 "verified": true}"#;

/// Renders the prompt: glossary, the five steps, output schema, few-shot
/// examples, then the instruction.
pub fn build_cot_prompt(text: &str, version: &str) -> Result<String> {
    if version != TEMPLATE_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unknown prompt template version '{version}' (available: {TEMPLATE_VERSION})"
        )));
    }
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::InvalidArgument("command text must not be empty".into()));
    }
    let vocabulary = vocabulary_names().join(", ");
    Ok(format!(
        "{GLOSSARY}\nAllowed feature types: {vocabulary}.\n\n{STEPS}\n\n{SCHEMA}\n\n{EXAMPLES}\n\nInstruction: {text}\n"
    ))
}
