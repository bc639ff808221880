//! Prompt assembly for the reasoner backends.

use super::kb::KnowledgeEntry;

/// System prompt with a `{context_str}` slot for the retrieved entries.
pub const PROMPT_TEMPLATE: &str = r#"You are a drone safety metadata extractor. Do NOT read any free text.
From the context, pull exactly two fields:
  • Classification: `yes' or `no'
  • Minimum Altitude: a float (strip `meters')

Context:
{context_str}

Examples:
Context: [Classification: no | Minimum Altitude: 0.0 meters | Text: brick building]
Q: a room with tree on the floor?
A: ```json
{"is_dynamic": "no", "z_min": 0.0}

Return only JSON:
```json
{
  "is_dynamic": "{Classification}",
  "z_min": {Minimum_Altitude}
}
```"#;

/// One context line describing a retrieved entry.
pub fn context_line(entry: &KnowledgeEntry) -> String {
    format!(
        "[Classification: {} | Minimum Altitude: {:?} meters | Text: {}]",
        if entry.is_dynamic { "yes" } else { "no" },
        entry.min_safe_altitude,
        entry.text.replace(['\n', '\r'], " ")
    )
}

/// Fill the template with one context line per retrieved entry, in
/// retrieval order, and append the caption as the question.
pub fn build_prompt(caption: &str, retrieved: &[&KnowledgeEntry]) -> String {
    let context: Vec<String> = retrieved.iter().map(|e| context_line(e)).collect();
    let mut out = PROMPT_TEMPLATE.replace("{context_str}", &context.join("\n"));
    out.push_str("\n\nQ: ");
    out.push_str(&caption.replace(['\n', '\r'], " "));
    out.push_str("\nA:");
    out
}

/// Split a built prompt into its instruction part and the trailing question.
pub fn split_question(prompt: &str) -> (&str, &str) {
    match prompt.rfind("\n\nQ: ") {
        Some(i) => {
            let q = &prompt[i + 5..];
            (&prompt[..i], q.strip_suffix("\nA:").unwrap_or(q))
        }
        None => (prompt, ""),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brick() -> KnowledgeEntry {
        KnowledgeEntry {
            class_name: "building".into(),
            keywords: vec!["building".into()],
            is_dynamic: false,
            min_safe_altitude: 0.0,
            buffer_radius: 1.0,
            text: "brick building".into(),
        }
    }

    #[test]
    fn brick_building_line() {
        assert_eq!(
            context_line(&brick()),
            "[Classification: no | Minimum Altitude: 0.0 meters | Text: brick building]"
        );
    }

    #[test]
    fn lines_follow_retrieval_order() {
        let mut person = brick();
        person.is_dynamic = true;
        person.min_safe_altitude = 2.5;
        person.text = "person".into();
        let p = build_prompt("a person walking", &[&person, &brick()]);
        let first = p.find("Text: person]").unwrap();
        let second = p.find("Text: brick building]\n\nExamples").unwrap();
        assert!(first < second);
        assert!(p.contains("[Classification: yes | Minimum Altitude: 2.5 meters | Text: person]\n"));
        assert!(p.ends_with("\n\nQ: a person walking\nA:"));
    }

    #[test]
    fn question_splits_back_out() {
        let p = build_prompt("two dogs", &[&brick()]);
        let (system, q) = split_question(&p);
        assert_eq!(q, "two dogs");
        assert!(system.starts_with("You are a drone safety metadata extractor."));
    }
}
