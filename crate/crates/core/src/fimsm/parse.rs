use std::fmt::Write as _;

use super::{ElementKind, FimsmModel, Layer, LayeredElement, Relation, RelationKind, SchemaError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {error}")]
    Schema { line: usize, error: SchemaError },
}

impl ModelError {
    fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        ModelError::Parse {
            line,
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, PartialEq)]
struct Token {
    text: String,
    quoted: bool,
    column: usize,
}

fn tokenize(line_no: usize, line: &str) -> Result<Vec<Token>, ModelError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().enumerate().peekable();
    while let Some(&(idx, c)) = chars.peek() {
        let column = idx + 1;
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut text = String::new();
            let mut closed = false;
            while let Some((_, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some((_, e @ ('"' | '\\'))) => text.push(e),
                        Some((i, other)) => {
                            return Err(ModelError::parse(
                                line_no,
                                i + 1,
                                format!("unsupported escape \\{other}"),
                            ))
                        }
                        None => break,
                    },
                    c => text.push(c),
                }
            }
            if !closed {
                return Err(ModelError::parse(line_no, column, "unterminated string"));
            }
            if let Some(&(i, next)) = chars.peek() {
                if !next.is_whitespace() && next != '#' {
                    return Err(ModelError::parse(
                        line_no,
                        i + 1,
                        "expected whitespace after string",
                    ));
                }
            }
            tokens.push(Token {
                text,
                quoted: true,
                column,
            });
        } else {
            let mut text = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() || c == '#' {
                    break;
                }
                if c == '"' {
                    return Err(ModelError::parse(line_no, idx + 1 + text.chars().count(), "unexpected quote"));
                }
                text.push(c);
                chars.next();
            }
            tokens.push(Token {
                text,
                quoted: false,
                column,
            });
        }
    }
    Ok(tokens)
}

fn expect_arity(line_no: usize, tokens: &[Token], arity: usize, usage: &str) -> Result<(), ModelError> {
    if tokens.len() == arity {
        return Ok(());
    }
    let column = tokens
        .get(arity)
        .or_else(|| tokens.last())
        .map(|t| t.column)
        .unwrap_or(1);
    Err(ModelError::parse(line_no, column, format!("expected `{usage}`")))
}

fn bare<'a>(line_no: usize, token: &'a Token, what: &str) -> Result<&'a str, ModelError> {
    if token.quoted {
        return Err(ModelError::parse(line_no, token.column, format!("{what} must not be quoted")));
    }
    Ok(&token.text)
}

fn quoted<'a>(line_no: usize, token: &'a Token, what: &str) -> Result<&'a str, ModelError> {
    if !token.quoted {
        return Err(ModelError::parse(line_no, token.column, format!("{what} must be quoted")));
    }
    Ok(&token.text)
}

/// Parses the line-oriented model format.
///
/// ```text
/// entity "University"
/// element u1 external actor "End user"
/// relation serves s1 u1
/// ```
///
/// Relations may reference elements declared further down.
pub fn load_model(document: &str) -> Result<FimsmModel, ModelError> {
    let mut model = FimsmModel::empty("");
    let mut pending_relations = Vec::new();

    for (idx, line) in document.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = tokenize(line_no, line)?;
        let Some(head) = tokens.first() else {
            continue;
        };
        if head.quoted {
            return Err(ModelError::parse(line_no, head.column, "expected record keyword"));
        }
        match head.text.as_str() {
            "entity" => {
                expect_arity(line_no, &tokens, 2, "entity \"<name>\"")?;
                let name = quoted(line_no, &tokens[1], "entity name")?;
                model.set_entity_name(name);
            }
            "element" => {
                expect_arity(line_no, &tokens, 5, "element <id> <layer> <kind> \"<name>\"")?;
                let id = bare(line_no, &tokens[1], "element id")?;
                let layer_text = bare(line_no, &tokens[2], "layer")?;
                let kind_text = bare(line_no, &tokens[3], "kind")?;
                let name = quoted(line_no, &tokens[4], "element name")?;
                let schema = |error| ModelError::Schema { line: line_no, error };
                let layer: Layer = layer_text
                    .parse()
                    .map_err(|_| schema(SchemaError::UnknownLayer(layer_text.into())))?;
                let kind: ElementKind = kind_text
                    .parse()
                    .map_err(|_| schema(SchemaError::UnknownKind(kind_text.into())))?;
                model
                    .add_element(LayeredElement::new(id, layer, kind, name))
                    .map_err(schema)?;
            }
            "relation" => {
                expect_arity(line_no, &tokens, 4, "relation <kind> <source-id> <target-id>")?;
                let kind_text = bare(line_no, &tokens[1], "relation kind")?;
                let kind: RelationKind = kind_text.parse().map_err(|_| ModelError::Schema {
                    line: line_no,
                    error: SchemaError::UnknownRelation(kind_text.into()),
                })?;
                let source = bare(line_no, &tokens[2], "source id")?;
                let target = bare(line_no, &tokens[3], "target id")?;
                pending_relations.push((line_no, Relation::new(kind, source, target)));
            }
            other => {
                return Err(ModelError::parse(
                    line_no,
                    head.column,
                    format!("unknown record {other:?}"),
                ))
            }
        }
    }

    for (line, relation) in pending_relations {
        model
            .add_relation(relation)
            .map_err(|error| ModelError::Schema { line, error })?;
    }
    Ok(model)
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Inverse of [`load_model`]. Names may not contain line breaks.
pub fn serialize_model(model: &FimsmModel) -> String {
    let mut out = String::new();
    if !model.entity_name().is_empty() {
        let _ = writeln!(out, "entity {}", quote(model.entity_name()));
    }
    for e in model.elements() {
        let _ = writeln!(
            out,
            "element {} {} {} {}",
            e.id,
            e.layer.keyword(),
            e.kind.keyword(),
            quote(&e.name)
        );
    }
    for r in model.relations() {
        let _ = writeln!(out, "relation {} {} {}", r.kind.keyword(), r.source, r.target);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let model = load_model("element u1 External Actor \"end user\"\n").unwrap();
        assert_eq!(model.elements().len(), 1);
        assert!(model.relations().is_empty());
        assert_eq!(model.elements()[0].name, "end user");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let doc = "# header\n\nentity \"Uni\" # trailing\nelement a external actor \"a # not a comment\"\n";
        let model = load_model(doc).unwrap();
        assert_eq!(model.entity_name(), "Uni");
        assert_eq!(model.elements()[0].name, "a # not a comment");
    }

    #[test]
    fn dangling_relation_names_missing_id() {
        let doc = "element a external actor \"a\"\nrelation uses a x9\n";
        let err = load_model(doc).unwrap_err();
        assert_eq!(
            err,
            ModelError::Schema {
                line: 2,
                error: SchemaError::DanglingReference("x9".into())
            }
        );
        assert!(err.to_string().contains("x9"));
    }

    #[test]
    fn forward_references_are_allowed() {
        let doc = "relation uses a b\nelement a external actor \"a\"\nelement b business-service service \"b\"\n";
        assert_eq!(load_model(doc).unwrap().relations().len(), 1);
    }

    #[test]
    fn parse_errors_report_position() {
        assert_eq!(
            load_model("element a external actor \"open\n"),
            Err(ModelError::Parse {
                line: 1,
                column: 26,
                message: "unterminated string".into()
            })
        );
        let err = load_model("\n  bogus x\n").unwrap_err();
        assert_eq!(
            err,
            ModelError::Parse {
                line: 2,
                column: 3,
                message: "unknown record \"bogus\"".into()
            }
        );
        assert!(matches!(
            load_model("element a external actor name\n"),
            Err(ModelError::Parse { line: 1, column: 26, .. })
        ));
        assert!(matches!(
            load_model("element a external actor\n"),
            Err(ModelError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn schema_errors_for_unknown_vocabulary() {
        assert_eq!(
            load_model("element a motivation actor \"x\""),
            Err(ModelError::Schema {
                line: 1,
                error: SchemaError::UnknownLayer("motivation".into())
            })
        );
        assert_eq!(
            load_model("element a external robot \"x\""),
            Err(ModelError::Schema {
                line: 1,
                error: SchemaError::UnknownKind("robot".into())
            })
        );
        assert_eq!(
            load_model("element a external actor \"x\"\nelement a external actor \"y\""),
            Err(ModelError::Schema {
                line: 2,
                error: SchemaError::DuplicateId("a".into())
            })
        );
    }

    #[test]
    fn escapes_survive_serialization() {
        let doc = "entity \"A \\\"quoted\\\" name\"\nelement a external actor \"back\\\\slash\"\n";
        let model = load_model(doc).unwrap();
        assert_eq!(model.entity_name(), "A \"quoted\" name");
        assert_eq!(model.elements()[0].name, "back\\slash");
        assert_eq!(load_model(&serialize_model(&model)).unwrap(), model);
    }
}
