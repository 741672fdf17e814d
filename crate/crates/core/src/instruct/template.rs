use std::collections::BTreeSet;

use super::{SlotName, SlotValues, TemplateError};

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Literal(String),
    Slot(SlotName),
}

/// A parsed instruction pattern. Placeholders are `{identifier}` with
/// identifier matching `[a-z_][a-z0-9_]*`; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    source: String,
    pieces: Vec<Piece>,
    required: BTreeSet<SlotName>,
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

pub fn parse_template(pattern: &str) -> Result<Pattern, TemplateError> {
    if pattern.is_empty() {
        return Err(TemplateError::EmptyPattern);
    }
    let mut pieces = Vec::new();
    let mut required = BTreeSet::new();
    let mut literal = String::new();
    let mut chars = pattern.char_indices().peekable();

    while let Some((pos, c)) = chars.next() {
        match c {
            '{' if matches!(chars.peek(), Some((_, '{'))) => {
                chars.next();
                literal.push('{');
            }
            '}' if matches!(chars.peek(), Some((_, '}'))) => {
                chars.next();
                literal.push('}');
            }
            '}' => return Err(TemplateError::UnbalancedBrace { position: pos }),
            '{' => {
                let mut name = String::new();
                let mut closed = false;
                for (inner_pos, inner) in chars.by_ref() {
                    match inner {
                        '}' => {
                            closed = true;
                            break;
                        }
                        '{' => return Err(TemplateError::UnbalancedBrace { position: inner_pos }),
                        other => name.push(other),
                    }
                }
                if !closed {
                    return Err(TemplateError::UnbalancedBrace { position: pos });
                }
                if name.is_empty() {
                    return Err(TemplateError::EmptyPlaceholder { position: pos });
                }
                if !is_identifier(&name) {
                    return Err(TemplateError::InvalidIdentifier(name));
                }
                let slot: SlotName = name.parse()?;
                if !literal.is_empty() {
                    pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                }
                pieces.push(Piece::Slot(slot));
                required.insert(slot);
            }
            other => literal.push(other),
        }
    }
    if !literal.is_empty() {
        pieces.push(Piece::Literal(literal));
    }

    Ok(Pattern {
        source: pattern.to_string(),
        pieces,
        required,
    })
}

impl Pattern {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn required_slots(&self) -> &BTreeSet<SlotName> {
        &self.required
    }

    /// Substitutes every placeholder. Extra slot values are ignored.
    pub fn fill(&self, slots: &SlotValues) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.source.len() + 16);
        for piece in &self.pieces {
            match piece {
                Piece::Literal(text) => out.push_str(text),
                Piece::Slot(slot) => {
                    let value = slots.get(*slot).ok_or(TemplateError::MissingSlot(*slot))?;
                    out.push_str(&value.render(*slot)?);
                }
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper over [`Pattern::fill`].
pub fn fill(pattern: &Pattern, slots: &SlotValues) -> Result<String, TemplateError> {
    pattern.fill(slots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::{LoudnessWord, SlotValue};
    use proptest::prelude::*;

    #[test]
    fn parses_slots_and_escapes() {
        let p = parse_template("Remove the {event}").unwrap();
        assert_eq!(p.required_slots(), &BTreeSet::from([SlotName::Event]));

        let p = parse_template("Add {{literal}}").unwrap();
        assert!(p.required_slots().is_empty());
        assert_eq!(p.fill(&SlotValues::new()).unwrap(), "Add {literal}");
    }

    #[test]
    fn grammar_errors() {
        assert!(matches!(
            parse_template("Make the {event} {count% }"),
            Err(TemplateError::InvalidIdentifier(name)) if name == "count% "
        ));
        assert!(matches!(parse_template("a {} b"), Err(TemplateError::EmptyPlaceholder { .. })));
        assert!(matches!(parse_template("a {event"), Err(TemplateError::UnbalancedBrace { .. })));
        assert!(matches!(parse_template("a } b"), Err(TemplateError::UnbalancedBrace { .. })));
        assert!(matches!(parse_template("{colour}"), Err(TemplateError::UnknownSlot(_))));
        assert!(matches!(parse_template("{Event}"), Err(TemplateError::InvalidIdentifier(_))));
        assert!(matches!(parse_template(""), Err(TemplateError::EmptyPattern)));
    }

    #[test]
    fn fill_cases() {
        let p = parse_template("Add a {event} at {onset_s} seconds").unwrap();
        let slots = SlotValues::new()
            .with(SlotName::Event, SlotValue::Text("dog bark".into()))
            .with(SlotName::OnsetS, SlotValue::Real(2.5));
        assert_eq!(p.fill(&slots).unwrap(), "Add a dog bark at 2.5 seconds");

        let slots = slots.with(SlotName::OnsetS, SlotValue::Real(2.0));
        assert_eq!(p.fill(&slots).unwrap(), "Add a dog bark at 2.0 seconds");

        let p = parse_template("Replace the {event} with {event2}").unwrap();
        assert!(matches!(p.fill(&slots), Err(TemplateError::MissingSlot(SlotName::Event2))));

        let p = parse_template("Make the {event} {direction} by {delta_db} dB").unwrap();
        let slots = SlotValues::new()
            .with(SlotName::Event, SlotValue::Text("siren".into()))
            .with(SlotName::Direction, SlotValue::Direction(LoudnessWord::Louder))
            .with(SlotName::DeltaDb, SlotValue::Real(6.0));
        assert_eq!(p.fill(&slots).unwrap(), "Make the siren louder by 6.0 dB");

        let wrong = slots.with(SlotName::DeltaDb, SlotValue::Text("six".into()));
        assert!(matches!(p.fill(&wrong), Err(TemplateError::TypeMismatch { .. })));
    }

    fn pattern_text() -> impl Strategy<Value = String> {
        let piece = prop_oneof![
            "[a-zA-Z ,.!?']{0,8}".prop_map(|s| s),
            Just("{{".to_string()),
            Just("}}".to_string()),
            proptest::sample::select(SlotName::ALL.to_vec()).prop_map(|s| format!("{{{s}}}")),
        ];
        prop::collection::vec(piece, 1..10).prop_map(|v| v.concat())
    }

    proptest! {
        // Filling each placeholder with its own name reproduces the pattern
        // with escapes collapsed.
        #[test]
        fn parse_render_round_trip(text in pattern_text()) {
            prop_assume!(!text.is_empty());
            let p = parse_template(&text).unwrap();
            let mut rendered = String::new();
            for piece in &p.pieces {
                match piece {
                    Piece::Literal(l) => rendered.push_str(l),
                    Piece::Slot(s) => rendered.push_str(&format!("{{{s}}}")),
                }
            }
            let unescaped = text.replace("{{", "\u{1}").replace("}}", "\u{2}");
            let expected = unescaped.replace('\u{1}', "{").replace('\u{2}', "}");
            prop_assert_eq!(rendered, expected);
        }

        #[test]
        fn fill_leaves_no_stray_braces(
            words in prop::collection::vec("[a-z ]{0,6}", 1..6),
            slots in prop::collection::vec(proptest::sample::select(vec![SlotName::Event, SlotName::OnsetS, SlotName::Alpha]), 1..6),
        ) {
            let mut text = String::new();
            for (w, s) in words.iter().zip(&slots) {
                text.push_str(w);
                text.push_str(&format!("{{{s}}}"));
            }
            let p = parse_template(&text).unwrap();
            let values = SlotValues::new()
                .with(SlotName::Event, SlotValue::Text("rain".into()))
                .with(SlotName::OnsetS, SlotValue::Real(1.25))
                .with(SlotName::Alpha, SlotValue::Real(0.5));
            let out = p.fill(&values).unwrap();
            let stray = out.contains(['{', '}']);
            prop_assert!(!stray, "stray brace in {:?}", out);
        }
    }
}
