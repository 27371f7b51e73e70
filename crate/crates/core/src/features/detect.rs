use super::lexer::{tokenize, Token};
use super::{DetectionRule, FeatureCatalog, FeatureVector};
use crate::{Error, Result};

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Alignof",
    "_Alignas", "_Atomic", "_Noreturn", "_Static_assert", "_Thread_local", "__inline",
    "__inline__", "__attribute__", "__volatile__", "__const",
];

const ASSIGNMENTS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// True when the token can end an operand, making a following `+`, `*`, `&`
/// or `++` binary/postfix.
fn ends_operand(tok: Option<&Token>) -> bool {
    match tok {
        Some(Token::Ident(s)) => !is_keyword(s),
        Some(Token::Number(_)) | Some(Token::Literal) => true,
        Some(Token::Punct(p)) => matches!(*p, ")" | "]"),
        None => false,
    }
}

/// Counts every catalog feature in `source`.
///
/// Bytes are decoded lossily; input containing NUL bytes is treated as
/// binary and rejected.
pub fn extract_features(
    program_id: &str,
    source: &[u8],
    catalog: &FeatureCatalog,
) -> Result<FeatureVector> {
    if source.contains(&0) {
        return Err(Error::Extraction(format!(
            "{program_id}: binary content (NUL byte) is not C source"
        )));
    }
    let text = String::from_utf8_lossy(source);
    let lexed = tokenize(&text);
    let counter = Counter {
        tokens: &lexed.tokens,
        directives: &lexed.directives,
    };
    let counts = catalog
        .features()
        .iter()
        .map(|spec| counter.count(spec.detector))
        .collect();
    Ok(FeatureVector {
        program_id: program_id.to_string(),
        counts,
    })
}

struct Counter<'a> {
    tokens: &'a [Token],
    directives: &'a [String],
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Group {
    /// Argument or parameter list.
    Call,
    /// Parenthesized expression or subscript.
    Expr,
    ForHeader,
    Brace,
}

impl Counter<'_> {
    fn count(&self, rule: DetectionRule) -> u64 {
        use DetectionRule::*;
        let n = match rule {
            Subscripts => self.count_punct(&["["]),
            BitfieldMembers => self.bitfields(),
            CommaOperators => self.comma_operators(),
            CompoundAssignments => self.count_punct(&ASSIGNMENTS[1..]),
            ConstQualifiers => self.count_ident(&["const", "__const"]),
            Divisions => self.count_punct(&["/", "%", "/=", "%="]),
            EmbeddedAssignments => self.embedded_assignments(),
            PreIncrements => self.step_ops("++", false),
            PreDecrements => self.step_ops("--", false),
            PostIncrements => self.step_ops("++", true),
            PostDecrements => self.step_ops("--", true),
            UnaryPlus => self.unary("+"),
            Gotos => self.count_ident(&["goto"]),
            LongLongTypes => self.pairs("long", "long"),
            Int8Types => self.count_ident(&["int8_t"]) + self.pairs("signed", "char"),
            Uint8Types => self.count_ident(&["uint8_t"]) + self.pairs("unsigned", "char"),
            FloatingTypes => self.count_ident(&["float", "double"]),
            Math64 => self.math64(),
            InlineSpecifiers => self.count_ident(&["inline", "__inline", "__inline__"]),
            Multiplications => self.binary("*") + self.count_punct(&["*="]),
            PackedAttributes => {
                self.count_ident(&["packed", "__packed__", "__packed"])
                    + self
                        .directives
                        .iter()
                        .filter(|d| {
                            let mut words = d.split(|c: char| !c.is_ascii_alphanumeric());
                            words.next() == Some("pragma") && words.any(|w| w == "pack")
                        })
                        .count()
            }
            StructKeywords => self.count_ident(&["struct"]),
            UnionKeywords => self.count_ident(&["union"]),
            VolatileQualifiers => self.count_ident(&["volatile", "__volatile__"]),
            VolatilePointers => self.qualified_pointers(&["volatile", "__volatile__"]),
            ConstPointers => self.qualified_pointers(&["const", "__const"]),
            GlobalVariables => self.global_variables(),
            Builtins => self
                .tokens
                .iter()
                .filter(|t| matches!(t, Token::Ident(s) if s.starts_with("__builtin_")))
                .count(),
            PointerOperations => {
                self.unary("*") + self.unary("&") + self.count_punct(&["->"])
            }
            Undetectable => 0,
        };
        n as u64
    }

    fn count_punct(&self, set: &[&str]) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, Token::Punct(p) if set.contains(p)))
            .count()
    }

    fn count_ident(&self, set: &[&str]) -> usize {
        self.tokens
            .iter()
            .filter(|t| matches!(t, Token::Ident(s) if set.contains(&s.as_str())))
            .count()
    }

    /// Non-overlapping adjacent identifier pairs.
    fn pairs(&self, first: &str, second: &str) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i + 1 < self.tokens.len() {
            if self.tokens[i].is_ident(first) && self.tokens[i + 1].is_ident(second) {
                n += 1;
                i += 2;
            } else {
                i += 1;
            }
        }
        n
    }

    fn prev(&self, i: usize) -> Option<&Token> {
        i.checked_sub(1).map(|j| &self.tokens[j])
    }

    fn unary(&self, op: &str) -> usize {
        (0..self.tokens.len())
            .filter(|&i| self.tokens[i].is_punct(op) && !ends_operand(self.prev(i)))
            .count()
    }

    fn binary(&self, op: &str) -> usize {
        (0..self.tokens.len())
            .filter(|&i| self.tokens[i].is_punct(op) && ends_operand(self.prev(i)))
            .count()
    }

    fn step_ops(&self, op: &str, postfix: bool) -> usize {
        (0..self.tokens.len())
            .filter(|&i| self.tokens[i].is_punct(op) && ends_operand(self.prev(i)) == postfix)
            .count()
    }

    fn math64(&self) -> usize {
        let literals = self
            .tokens
            .iter()
            .filter(|t| match t {
                Token::Number(n) => n
                    .to_ascii_lowercase()
                    .trim_end_matches('u')
                    .ends_with("ll"),
                _ => false,
            })
            .count();
        self.count_ident(&["int64_t", "uint64_t"]) + literals
    }

    /// Segments of tokens between declarator/expression delimiters that hold
    /// both a qualifier and a `*`.
    fn qualified_pointers(&self, qualifiers: &[&str]) -> usize {
        let mut n = 0;
        let mut has_qualifier = false;
        let mut has_star = false;
        for tok in self.tokens {
            match tok {
                Token::Punct(";" | "," | "=" | "{" | "}" | "(" | ")") => {
                    if has_qualifier && has_star {
                        n += 1;
                    }
                    has_qualifier = false;
                    has_star = false;
                }
                Token::Punct("*") => has_star = true,
                Token::Ident(s) if qualifiers.contains(&s.as_str()) => has_qualifier = true,
                _ => {}
            }
        }
        n + usize::from(has_qualifier && has_star)
    }

    /// Classifies each opening bracket by what precedes it.
    fn open_group(&self, i: usize) -> Group {
        match (&self.tokens[i], self.prev(i)) {
            (Token::Punct("{"), _) => Group::Brace,
            (Token::Punct("["), _) => Group::Expr,
            (Token::Punct("("), Some(Token::Ident(s))) if s == "for" => Group::ForHeader,
            (Token::Punct("("), Some(Token::Ident(s)))
                if matches!(s.as_str(), "if" | "while" | "switch" | "return") =>
            {
                Group::Expr
            }
            (Token::Punct("("), Some(Token::Ident(s))) if s == "sizeof" || !is_keyword(s) => {
                Group::Call
            }
            (Token::Punct("("), Some(Token::Punct(")" | "]"))) => Group::Call,
            _ => Group::Expr,
        }
    }

    fn comma_operators(&self) -> usize {
        let mut stack: Vec<Group> = Vec::new();
        let mut n = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Punct("(" | "[" | "{") => stack.push(self.open_group(i)),
                Token::Punct(")" | "]" | "}") => {
                    stack.pop();
                }
                Token::Punct(",") => {
                    if matches!(stack.last(), Some(Group::Expr | Group::ForHeader)) {
                        n += 1;
                    }
                }
                _ => {}
            }
        }
        n
    }

    fn embedded_assignments(&self) -> usize {
        // One "assignment already seen" flag per nesting level; the bottom
        // entry is file scope.
        let mut stack: Vec<(Group, bool)> = vec![(Group::Brace, false)];
        let mut n = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Punct("(" | "[" | "{") => stack.push((self.open_group(i), false)),
                Token::Punct(")" | "]" | "}") => {
                    if stack.len() > 1 {
                        stack.pop();
                    }
                }
                Token::Punct(";" | "," | ":") => {
                    if let Some(top) = stack.last_mut() {
                        top.1 = false;
                    }
                }
                Token::Punct(p) if ASSIGNMENTS.contains(p) => {
                    let top = stack.last_mut().expect("file scope entry");
                    match top.0 {
                        Group::Call | Group::Expr => n += 1,
                        Group::ForHeader | Group::Brace => {
                            if top.1 {
                                n += 1;
                            }
                            top.1 = true;
                        }
                    }
                }
                _ => {}
            }
        }
        n
    }

    fn bitfields(&self) -> usize {
        let mut stack: Vec<bool> = Vec::new();
        let mut n = 0;
        for (i, tok) in self.tokens.iter().enumerate() {
            match tok {
                Token::Punct("{") => stack.push(self.opens_record_body(i)),
                Token::Punct("(" | "[") => stack.push(false),
                Token::Punct("}" | ")" | "]") => {
                    stack.pop();
                }
                Token::Punct(":") if stack.last() == Some(&true) => {
                    let width = matches!(self.tokens.get(i + 1), Some(Token::Number(_)));
                    let end = matches!(
                        self.tokens.get(i + 2),
                        Some(Token::Punct(";" | ","))
                    );
                    if width && end {
                        n += 1;
                    }
                }
                _ => {}
            }
        }
        n
    }

    /// Walks back from a `{` over a tag name and attribute groups looking for
    /// `struct` or `union`.
    fn opens_record_body(&self, brace: usize) -> bool {
        let mut i = brace;
        let mut depth = 0usize;
        let mut steps = 0;
        while i > 0 && steps < 32 {
            i -= 1;
            steps += 1;
            match &self.tokens[i] {
                Token::Punct(")") => depth += 1,
                Token::Punct("(") => depth = depth.saturating_sub(1),
                _ if depth > 0 => {}
                Token::Ident(s) if s == "struct" || s == "union" => return true,
                Token::Ident(s) if s == "enum" => return false,
                Token::Ident(_) => {}
                _ => return false,
            }
        }
        false
    }

    /// Declarators of file-scope variable declarations. Function prototypes
    /// and definitions, typedefs, and bare tag definitions do not count.
    fn global_variables(&self) -> usize {
        let mut n = 0;
        let mut i = 0;
        let toks = self.tokens;
        let mut item_start = 0;
        while i < toks.len() {
            match &toks[i] {
                Token::Punct("{") => {
                    let close = matching(toks, i);
                    // `) {` opens a function body: the item ends with it.
                    if matches!(self.prev(i), Some(Token::Punct(")")))
                        || matches!(self.prev(i), Some(Token::Ident(s)) if !is_keyword(s) && self.is_old_style_def(item_start, i))
                    {
                        i = close + 1;
                        item_start = i;
                        continue;
                    }
                    i = close + 1;
                }
                Token::Punct(";") => {
                    n += self.declarators(&toks[item_start..i]);
                    i += 1;
                    item_start = i;
                }
                Token::Punct("(" | "[") => i = matching(toks, i) + 1,
                _ => i += 1,
            }
        }
        n
    }

    /// K&R definitions (`int f(a) int a; {`) are rare; treat an item whose
    /// first parenthesized group follows an identifier as a function.
    fn is_old_style_def(&self, start: usize, brace: usize) -> bool {
        let item = &self.tokens[start..brace];
        item.iter().any(|t| t.is_punct(";"))
            && item
                .windows(2)
                .any(|w| matches!(&w[0], Token::Ident(s) if !is_keyword(s)) && w[1].is_punct("("))
    }

    fn declarators(&self, item: &[Token]) -> usize {
        let Some(first) = item.first() else {
            return 0;
        };
        if first.is_ident("typedef") || first.is_ident("extern") {
            return 0;
        }
        // Walk the item at nesting depth zero.
        let mut count = 0;
        let mut j = 0;
        let mut segment_has_name = false;
        let mut segment_is_function = false;
        let mut in_initializer = false;
        while j < item.len() {
            match &item[j] {
                Token::Punct("{") => {
                    j = matching(item, j) + 1;
                    continue;
                }
                Token::Punct("(") => {
                    let close = matching(item, j);
                    if !in_initializer {
                        let prev_is_name = matches!(
                            j.checked_sub(1).map(|p| &item[p]),
                            Some(Token::Ident(s)) if !is_keyword(s) && s != "__attribute__"
                        );
                        let inner_pointer = item.get(j + 1).is_some_and(|t| t.is_punct("*"));
                        if inner_pointer {
                            // `(*name)` declarator: the name inside counts.
                            segment_has_name = true;
                        } else if prev_is_name && !segment_is_function {
                            segment_is_function = true;
                        }
                    }
                    j = close + 1;
                    continue;
                }
                Token::Punct("[") => {
                    j = matching(item, j) + 1;
                    continue;
                }
                Token::Punct("=") => in_initializer = true,
                Token::Punct(",") => {
                    if segment_has_name && !segment_is_function {
                        count += 1;
                    }
                    segment_has_name = false;
                    segment_is_function = false;
                    in_initializer = false;
                }
                Token::Ident(s) if !in_initializer && !is_keyword(s) => {
                    // A tag name right after struct/union/enum is not a
                    // declarator, nor is a type name followed by another name.
                    let after_tag = j
                        .checked_sub(1)
                        .is_some_and(|p| matches!(&item[p], Token::Ident(k) if k == "struct" || k == "union" || k == "enum"));
                    if !after_tag {
                        segment_has_name = true;
                        segment_is_function = false;
                    }
                }
                _ => {}
            }
            j += 1;
        }
        if segment_has_name && !segment_is_function {
            count += 1;
        }
        count
    }
}

/// Index of the bracket closing the one at `open`, or the last index when
/// unbalanced.
fn matching(tokens: &[Token], open: usize) -> usize {
    let (o, c) = match &tokens[open] {
        Token::Punct("(") => ("(", ")"),
        Token::Punct("[") => ("[", "]"),
        _ => ("{", "}"),
    };
    let mut depth = 0usize;
    for (k, tok) in tokens.iter().enumerate().skip(open) {
        if tok.is_punct(o) {
            depth += 1;
        } else if tok.is_punct(c) {
            depth -= 1;
            if depth == 0 {
                return k;
            }
        }
    }
    tokens.len().saturating_sub(1)
}
