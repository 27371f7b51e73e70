//! A forgiving C tokenizer.
//!
//! Comments are dropped, string and character literals collapse to
//! [`Token::Literal`], and preprocessor directives are set aside. It never
//! fails: unknown bytes become single-character punctuators.

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Number(String),
    Literal,
    Punct(&'static str),
}

impl Token {
    pub fn is_ident(&self, s: &str) -> bool {
        matches!(self, Token::Ident(id) if id == s)
    }

    pub fn is_punct(&self, s: &str) -> bool {
        matches!(self, Token::Punct(p) if *p == s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    /// Preprocessor lines with continuations joined, without the leading `#`.
    pub directives: Vec<String>,
}

const PUNCTS: &[&str] = &[
    ">>=", "<<=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##", "[", "]", "(", ")", "{", "}", ".", "&", "*",
    "+", "-", "~", "!", "/", "%", "<", ">", "^", "|", "?", ":", ";", "=", ",", "#",
];

const OTHER: &str = "?";

pub fn tokenize(source: &str) -> Lexed {
    let bytes = source.as_bytes();
    let mut out = Lexed::default();
    let mut i = 0;
    let mut line_start = true;

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                line_start = true;
                i += 1;
            }
            b' ' | b'\t' | b'\r' | 0x0b | 0x0c => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            b'#' if line_start => {
                let (directive, next) = read_directive(bytes, i + 1);
                out.directives.push(directive);
                i = next;
            }
            b'"' | b'\'' => {
                i = skip_literal(bytes, i);
                out.tokens.push(Token::Literal);
                line_start = false;
            }
            _ if b.is_ascii_alphabetic() || b == b'_' || b >= 0x80 => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80)
                {
                    i += 1;
                }
                // Wide and unicode literal prefixes: L"..", u8"..", U'..'.
                if matches!(bytes.get(i), Some(b'"' | b'\''))
                    && matches!(&source[start..i], "L" | "u" | "U" | "u8")
                {
                    i = skip_literal(bytes, i);
                    out.tokens.push(Token::Literal);
                } else {
                    out.tokens.push(Token::Ident(source[start..i].to_string()));
                }
                line_start = false;
            }
            _ if b.is_ascii_digit()
                || (b == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) =>
            {
                let start = i;
                i += 1;
                while i < bytes.len() {
                    let c = bytes[i];
                    let exponent_sign = (c == b'+' || c == b'-')
                        && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P')
                        && !is_hex_e(&bytes[start..i]);
                    if c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || exponent_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.tokens.push(Token::Number(source[start..i].to_string()));
                line_start = false;
            }
            _ => {
                let rest = &bytes[i..];
                let punct = PUNCTS
                    .iter()
                    .find(|p| rest.starts_with(p.as_bytes()))
                    .copied();
                match punct {
                    Some(p) => {
                        out.tokens.push(Token::Punct(p));
                        i += p.len();
                    }
                    None => {
                        out.tokens.push(Token::Punct(OTHER));
                        i += 1;
                    }
                }
                line_start = false;
            }
        }
    }
    out
}

/// `0x1e+2` is `0x1e` plus `2`; only decimal exponents and hex-float `p`
/// exponents take a sign.
fn is_hex_e(number: &[u8]) -> bool {
    let hex = number.len() > 1 && number[0] == b'0' && matches!(number[1], b'x' | b'X');
    hex && matches!(number.last(), Some(b'e' | b'E'))
}

fn skip_literal(bytes: &[u8], start: usize) -> usize {
    let quote = bytes[start];
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            c if c == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

fn read_directive(bytes: &[u8], start: usize) -> (String, usize) {
    let mut i = start;
    let mut text = Vec::new();
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if bytes.get(i + 1) == Some(&b'\n') => i += 2,
            b'\\' if bytes.get(i + 1) == Some(&b'\r') && bytes.get(i + 2) == Some(&b'\n') => {
                i += 3
            }
            b'\n' => break,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
                text.push(b' ');
            }
            c => {
                text.push(c);
                i += 1;
            }
        }
    }
    (String::from_utf8_lossy(&text).trim().to_string(), i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idents(src: &str) -> Vec<String> {
        tokenize(src)
            .tokens
            .into_iter()
            .filter_map(|t| match t {
                Token::Ident(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn comments_and_strings_are_stripped() {
        let src = "/* volatile */ int a; // volatile\nchar *s = \"volatile \\\" x\"; char c = 'v';";
        assert_eq!(idents(src), ["int", "a", "char", "s", "char", "c"]);
        let lexed = tokenize(src);
        assert_eq!(
            lexed.tokens.iter().filter(|t| **t == Token::Literal).count(),
            2
        );
    }

    #[test]
    fn maximal_munch() {
        let lexed = tokenize("a+++b>>=c->d");
        let puncts: Vec<&str> = lexed
            .tokens
            .iter()
            .filter_map(|t| match t {
                Token::Punct(p) => Some(*p),
                _ => None,
            })
            .collect();
        assert_eq!(puncts, ["++", "+", ">>=", "->"]);
    }

    #[test]
    fn directives_set_aside() {
        let lexed = tokenize("#pragma pack(1)\n#define X \\\n  volatile\nint x;");
        assert_eq!(lexed.directives, ["pragma pack(1)", "define X   volatile"]);
        assert_eq!(lexed.tokens.len(), 3);
    }

    #[test]
    fn numbers() {
        let lexed = tokenize("1e+5 0x1e+2 .5f 10ULL");
        assert_eq!(
            lexed.tokens,
            [
                Token::Number("1e+5".into()),
                Token::Number("0x1e".into()),
                Token::Punct("+"),
                Token::Number("2".into()),
                Token::Number(".5f".into()),
                Token::Number("10ULL".into()),
            ]
        );
    }

    #[test]
    fn unterminated_constructs_do_not_panic() {
        for src in ["/* open", "\"open", "'", "#define", "a /", "\\"] {
            tokenize(src);
        }
    }
}
