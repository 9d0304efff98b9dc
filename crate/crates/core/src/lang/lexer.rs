use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Int(i64),
    Atom(String),
    Var(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Arrow,
    Match,
    Bang,
    Plus,
    Minus,
    Star,
    EqEq,
    NotEq,
    Lt,
    Le,
    Bar,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Int(n) => format!("integer {n}"),
            Tok::Atom(a) => format!("atom '{a}'"),
            Tok::Var(v) => format!("variable '{v}'"),
            Tok::Eof => "end of input".to_string(),
            other => format!("'{}'", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Arrow => "->",
            Tok::Match => "=",
            Tok::Bang => "!",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::EqEq => "==",
            Tok::NotEq => "/=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Bar => "|",
            Tok::Int(_) | Tok::Atom(_) | Tok::Var(_) | Tok::Eof => "",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

fn advance(n: usize, i: &mut usize, col: &mut usize) {
    *i += n;
    *col += n;
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);

        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i, &mut col);
            }
            continue;
        }

        let next = chars.get(i + 1).copied();
        let tok = if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(1, &mut i, &mut col);
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<i64>().map_err(|_| ParseError {
                line: start_line,
                column: start_col,
                message: format!("integer literal {text} out of range"),
            })?;
            out.push(Spanned { tok: Tok::Int(n), line: start_line, column: start_col });
            continue;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(1, &mut i, &mut col);
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if c.is_ascii_lowercase() { Tok::Atom(text) } else { Tok::Var(text) };
            out.push(Spanned { tok, line: start_line, column: start_col });
            continue;
        } else {
            match (c, next) {
                ('-', Some('>')) => (Tok::Arrow, 2),
                ('=', Some('=')) => (Tok::EqEq, 2),
                ('/', Some('=')) => (Tok::NotEq, 2),
                ('<', Some('=')) => (Tok::Le, 2),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('[', _) => (Tok::LBracket, 1),
                (']', _) => (Tok::RBracket, 1),
                (',', _) => (Tok::Comma, 1),
                (';', _) => (Tok::Semi, 1),
                ('.', _) => (Tok::Dot, 1),
                ('=', _) => (Tok::Match, 1),
                ('!', _) => (Tok::Bang, 1),
                ('+', _) => (Tok::Plus, 1),
                ('-', _) => (Tok::Minus, 1),
                ('*', _) => (Tok::Star, 1),
                ('<', _) => (Tok::Lt, 1),
                ('|', _) => (Tok::Bar, 1),
                _ => {
                    return Err(ParseError {
                        line: start_line,
                        column: start_col,
                        message: format!("unexpected character {c:?}"),
                    })
                }
            }
        };
        let (tok, width) = tok;
        advance(width, &mut i, &mut col);
        out.push(Spanned { tok, line: start_line, column: start_col });
    }

    out.push(Spanned { tok: Tok::Eof, line, column: col });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|s| s.tok).collect()
    }

    #[test]
    fn operators_and_names() {
        assert_eq!(
            toks("f(X) -> X /= 1, _Y <= -2. % done"),
            vec![
                Tok::Atom("f".into()),
                Tok::LParen,
                Tok::Var("X".into()),
                Tok::RParen,
                Tok::Arrow,
                Tok::Var("X".into()),
                Tok::NotEq,
                Tok::Int(1),
                Tok::Comma,
                Tok::Var("_Y".into()),
                Tok::Le,
                Tok::Minus,
                Tok::Int(2),
                Tok::Dot,
                Tok::Eof,
            ]
        );
    }

    #[test]
    fn positions_track_lines() {
        let spanned = tokenize("a\n  b").unwrap();
        assert_eq!((spanned[1].line, spanned[1].column), (2, 3));
    }

    #[test]
    fn rejects_stray_characters() {
        let err = tokenize("main() -> 1 # 2.").unwrap_err();
        assert_eq!((err.line, err.column), (1, 13));
    }
}
