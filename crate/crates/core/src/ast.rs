//! AST ingestion and flattening.
//!
//! Trees arrive in a neutral JSON shape (`node_type`, optional `token`,
//! `children`) so real-language front-ends stay replaceable adapters; a
//! small demonstration-language parser ([`parse_toy`]) covers
//! assignments, calls, identifiers, and integer literals.
//!
//! Two flattenings are provided. [`to_sbt`] is the classic bracketed
//! pre-order with leaf tokens fused as `NodeType_token`. [`to_asbt`]
//! splits structure from content: node types become marker tokens typed
//! 0/1/2 and identifier sub-tokens carry position codes 3/4/5 (or 6 for
//! a single-sub-token identifier), keeping the token and type sequences
//! aligned one-to-one.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};

mod parser;
pub use parser::parse_toy;

/// Position codes in the aSBT type sequence.
pub mod type_codes {
    /// Opening marker of a node with children.
    pub const BEGIN_NODE: u8 = 0;
    /// Closing marker of a node with children.
    pub const END_NODE: u8 = 1;
    /// Marker of a single-node subtree.
    pub const SINGLE_NODE: u8 = 2;
    /// First sub-token of a multi-sub-token identifier.
    pub const TOKEN_BEGIN: u8 = 3;
    /// Interior sub-token.
    pub const TOKEN_MID: u8 = 4;
    /// Last sub-token of a multi-sub-token identifier.
    pub const TOKEN_END: u8 = 5;
    /// Sole sub-token of a single-sub-token identifier (also used for
    /// literals, which are never split).
    pub const TOKEN_SINGLE: u8 = 6;

    pub const COUNT: usize = 7;

    /// True for codes that mark identifier sub-tokens rather than
    /// structure.
    pub fn is_subtoken(code: u8) -> bool {
        (TOKEN_BEGIN..=TOKEN_SINGLE).contains(&code)
    }
}

/// Tree node in the neutral ingestion format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<AstNode>,
}

impl AstNode {
    pub fn new(node_type: &str) -> Self {
        AstNode {
            node_type: node_type.to_string(),
            token: None,
            children: Vec::new(),
        }
    }

    pub fn with_token(node_type: &str, token: &str) -> Self {
        AstNode {
            node_type: node_type.to_string(),
            token: Some(token.to_string()),
            children: Vec::new(),
        }
    }

    pub fn with_children(node_type: &str, children: Vec<AstNode>) -> Self {
        AstNode {
            node_type: node_type.to_string(),
            token: None,
            children,
        }
    }

    /// Validates the ingestion invariants (nonempty node types) over the
    /// whole tree. Acyclicity holds by construction: children are owned.
    pub fn validate(&self) -> Result<()> {
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if node.node_type.is_empty() {
                return Err(CoreError::contract("AST node with empty node_type"));
            }
            stack.extend(node.children.iter());
        }
        Ok(())
    }
}

/// Aligned flattened sequences: one type code per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsbtSequence {
    pub tokens: Vec<String>,
    pub types: Vec<u8>,
}

impl AsbtSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits an identifier on underscores and lower-to-upper camelCase
/// boundaries, preserving the original casing of each piece. Digits stay
/// attached to the run they follow. Runs of underscores are separators
/// and vanish; an identifier made only of separators comes back whole.
fn split_identifier_cased(identifier: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut prev: Option<char> = None;
    for ch in identifier.chars() {
        if ch == '_' {
            if !current.is_empty() {
                parts.push(std::mem::take(&mut current));
            }
            prev = None;
            continue;
        }
        if let Some(p) = prev {
            if p.is_lowercase() && ch.is_uppercase() && !current.is_empty() {
                parts.push(std::mem::take(&mut current));
            }
        }
        current.push(ch);
        prev = Some(ch);
    }
    if !current.is_empty() {
        parts.push(current);
    }
    if parts.is_empty() {
        parts.push(identifier.to_string());
    }
    parts
}

/// Lowercased sub-tokens of an identifier, order preserved.
pub fn split_subtokens(identifier: &str) -> Vec<String> {
    split_identifier_cased(identifier)
        .into_iter()
        .map(|s| s.to_lowercase())
        .collect()
}

fn leaf_label(node: &AstNode) -> String {
    match &node.token {
        Some(tok) => format!("{}_{}", node.node_type, tok),
        None => node.node_type.clone(),
    }
}

/// Classic structure-based traversal. Iterative with an explicit work
/// stack; the recursive oracle in the tests mirrors it independently.
pub fn to_sbt(root: &AstNode) -> Vec<String> {
    enum Work<'a> {
        Enter(&'a AstNode),
        Close(&'a AstNode),
    }
    let mut out = Vec::new();
    let mut stack = vec![Work::Enter(root)];
    while let Some(item) = stack.pop() {
        match item {
            Work::Enter(node) => {
                if node.children.is_empty() {
                    out.push(leaf_label(node));
                } else {
                    out.push("(".to_string());
                    out.push(node.node_type.clone());
                    stack.push(Work::Close(node));
                    for child in node.children.iter().rev() {
                        stack.push(Work::Enter(child));
                    }
                }
            }
            Work::Close(node) => {
                out.push(")".to_string());
                out.push(node.node_type.clone());
            }
        }
    }
    out
}

fn emit_subtokens(token: &str, tokens: &mut Vec<String>, types: &mut Vec<u8>) {
    let parts = split_identifier_cased(token);
    if parts.len() == 1 {
        tokens.push(parts.into_iter().next().unwrap());
        types.push(type_codes::TOKEN_SINGLE);
        return;
    }
    let last = parts.len() - 1;
    for (i, part) in parts.into_iter().enumerate() {
        tokens.push(part);
        types.push(if i == 0 {
            type_codes::TOKEN_BEGIN
        } else if i == last {
            type_codes::TOKEN_END
        } else {
            type_codes::TOKEN_MID
        });
    }
}

/// Flattens a tree into aligned aSBT token/type sequences.
pub fn to_asbt(root: &AstNode) -> AsbtSequence {
    enum Work<'a> {
        Enter(&'a AstNode),
        Close(&'a AstNode),
    }
    let mut tokens = Vec::new();
    let mut types = Vec::new();
    let mut stack = vec![Work::Enter(root)];
    while let Some(item) = stack.pop() {
        match item {
            Work::Enter(node) => {
                if node.children.is_empty() {
                    tokens.push(node.node_type.clone());
                    types.push(type_codes::SINGLE_NODE);
                    if let Some(tok) = &node.token {
                        emit_subtokens(tok, &mut tokens, &mut types);
                    }
                } else {
                    tokens.push(node.node_type.clone());
                    types.push(type_codes::BEGIN_NODE);
                    if let Some(tok) = &node.token {
                        emit_subtokens(tok, &mut tokens, &mut types);
                    }
                    stack.push(Work::Close(node));
                    for child in node.children.iter().rev() {
                        stack.push(Work::Enter(child));
                    }
                }
            }
            Work::Close(node) => {
                tokens.push(node.node_type.clone());
                types.push(type_codes::END_NODE);
            }
        }
    }
    AsbtSequence { tokens, types }
}
