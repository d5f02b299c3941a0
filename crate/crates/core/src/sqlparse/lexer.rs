use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    /// Identifier or keyword, lowercased.
    Word(String),
    Int(i64),
    Str(String),
    Blob(Vec<u8>),
    Comma,
    LParen,
    RParen,
    Star,
    Semicolon,
    Dot,
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based byte offset of the first byte.
    pub offset: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let at = start + 1;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b',' => single(&mut i, Tok::Comma),
            b'(' => single(&mut i, Tok::LParen),
            b')' => single(&mut i, Tok::RParen),
            b'*' => single(&mut i, Tok::Star),
            b';' => single(&mut i, Tok::Semicolon),
            b'.' => single(&mut i, Tok::Dot),
            b'=' => single(&mut i, Tok::Eq),
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => double(&mut i, Tok::Le),
                Some(b'>') => double(&mut i, Tok::Ne),
                _ => single(&mut i, Tok::Lt),
            },
            b'>' => match bytes.get(i + 1) {
                Some(b'=') => double(&mut i, Tok::Ge),
                _ => single(&mut i, Tok::Gt),
            },
            b'-' if bytes.get(i + 1) == Some(&b'-') => {
                return Err(ParseError::Unsupported { offset: at, feature: "comments".into() })
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                return Err(ParseError::Unsupported { offset: at, feature: "comments".into() })
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                if text == "-" {
                    return Err(ParseError::syntax(at, "expected digits after `-`"));
                }
                if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' || bytes[i] == b'.') {
                    return Err(ParseError::syntax(i + 1, "malformed number"));
                }
                let v = text.parse::<i64>().map_err(|_| ParseError::syntax(at, "integer literal out of range"))?;
                Tok::Int(v)
            }
            b'\'' => {
                i += 1;
                Tok::Str(read_quoted(src, &mut i, at)?)
            }
            b'x' | b'X' if bytes.get(i + 1) == Some(&b'\'') => {
                i += 2;
                let hex_text = read_quoted(src, &mut i, at)?;
                let blob = hex::decode(&hex_text).map_err(|_| ParseError::syntax(at, "malformed blob literal"))?;
                Tok::Blob(blob)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Tok::Word(src[start..i].to_ascii_lowercase())
            }
            b'"' | b'`' | b'[' => {
                return Err(ParseError::Unsupported { offset: at, feature: "quoted identifiers".into() })
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::syntax(at, &format!("unexpected character `{ch}`")));
            }
        };
        out.push(Token { tok, offset: at });
    }
    Ok(out)
}

fn single(i: &mut usize, t: Tok) -> Tok {
    *i += 1;
    t
}

fn double(i: &mut usize, t: Tok) -> Tok {
    *i += 2;
    t
}

/// Reads up to the closing quote; `''` is an escaped quote. `i` starts just
/// past the opening quote.
fn read_quoted(src: &str, i: &mut usize, at: usize) -> Result<String, ParseError> {
    let bytes = src.as_bytes();
    let mut out = String::new();
    let mut seg = *i;
    loop {
        match bytes.get(*i) {
            None => return Err(ParseError::syntax(at, "unterminated string literal")),
            Some(b'\'') if bytes.get(*i + 1) == Some(&b'\'') => {
                out.push_str(&src[seg..=*i]);
                *i += 2;
                seg = *i;
            }
            Some(b'\'') => {
                out.push_str(&src[seg..*i]);
                *i += 1;
                return Ok(out);
            }
            Some(_) => *i += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators() {
        assert_eq!(toks("< <= > >= <> ="), vec![Tok::Lt, Tok::Le, Tok::Gt, Tok::Ge, Tok::Ne, Tok::Eq]);
    }

    #[test]
    fn strings_with_escaped_quotes() {
        assert_eq!(toks("'it''s'"), vec![Tok::Str("it's".into())]);
        assert_eq!(toks("''"), vec![Tok::Str(String::new())]);
        assert_eq!(toks("'a;b--c'"), vec![Tok::Str("a;b--c".into())]);
    }

    #[test]
    fn numbers_and_blobs() {
        assert_eq!(toks("-12 7"), vec![Tok::Int(-12), Tok::Int(7)]);
        assert_eq!(toks("X'0aFF'"), vec![Tok::Blob(vec![0x0a, 0xff])]);
    }

    #[test]
    fn offsets_are_one_based_bytes() {
        let t = tokenize("SELECT é").unwrap_err();
        assert_eq!(t.offset(), 8);
        let t = tokenize("a 'open").unwrap_err();
        assert_eq!(t.offset(), 3);
    }
}
