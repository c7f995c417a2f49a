use super::SandboxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Num(f64),
    Str(String),
    /// Cooked string pieces and raw `${...}` expression sources with their line.
    Template(Vec<String>, Vec<(String, usize)>),
    Ident(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
    /// A line terminator precedes this token.
    pub nl_before: bool,
}

const PUNCTS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==", "!=",
    "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-", "*", "/", "%",
    "&", "|", "^", "!", "~", "?", ":", "=", ".", "@", "#",
];

fn ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn ident_part(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

pub fn tokenize(src: &str, first_line: usize) -> Result<Vec<Token>, SandboxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out: Vec<Token> = Vec::new();
    let mut i = 0;
    let mut line = first_line;
    let mut line_start = 0;
    let mut nl = false;

    let syntax = |line: usize, col: usize, message: &str| SandboxError::Syntax {
        line,
        col,
        message: message.to_string(),
    };

    while i < chars.len() {
        let c = chars[i];
        let col = i - line_start + 1;
        if c == '\n' {
            line += 1;
            line_start = i + 1;
            nl = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i >= chars.len() {
                    return Err(syntax(line, col, "unterminated comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    i += 2;
                    break;
                }
                if chars[i] == '\n' {
                    line += 1;
                    line_start = i + 1;
                    nl = true;
                }
                i += 1;
            }
            continue;
        }

        let start_line = line;
        let tok = if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            if c == '0' && matches!(chars.get(i + 1), Some('x' | 'X' | 'b' | 'B' | 'o' | 'O')) {
                let radix = match chars[i + 1] {
                    'x' | 'X' => 16,
                    'b' | 'B' => 2,
                    _ => 8,
                };
                i += 2;
                let digits_start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let digits: String = chars[digits_start..i].iter().filter(|c| **c != '_').collect();
                let n = u64::from_str_radix(&digits, radix)
                    .map_err(|_| syntax(line, col, "malformed number"))?;
                Tok::Num(n as f64)
            } else {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                    i += 1;
                }
                if chars.get(i) == Some(&'.') {
                    i += 1;
                    while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                        i += 1;
                    }
                }
                if matches!(chars.get(i), Some('e' | 'E')) {
                    i += 1;
                    if matches!(chars.get(i), Some('+' | '-')) {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if chars.get(i) == Some(&'n') {
                    return Err(SandboxError::Unsupported {
                        construct: "BigInt literals".into(),
                        line,
                    });
                }
                if chars.get(i).is_some_and(|c| ident_start(*c)) {
                    return Err(syntax(line, col, "identifier directly after number"));
                }
                let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
                Tok::Num(text.parse().map_err(|_| syntax(line, col, "malformed number"))?)
            }
        } else if ident_start(c) || c == '\\' {
            let start = i;
            if c == '\\' {
                return Err(syntax(line, col, "unicode escapes in identifiers are not supported"));
            }
            while i < chars.len() && ident_part(chars[i]) {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c == '"' || c == '\'' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(syntax(start_line, col, "unterminated string"));
                };
                if ch == '\n' {
                    return Err(syntax(start_line, col, "unterminated string"));
                }
                i += 1;
                if ch == c {
                    break;
                }
                if ch == '\\' {
                    i = read_escape(&chars, i, &mut s, &mut line, &mut line_start)
                        .map_err(|m| syntax(line, col, m))?;
                } else {
                    s.push(ch);
                }
            }
            Tok::Str(s)
        } else if c == '`' {
            i += 1;
            let mut quasis = Vec::new();
            let mut exprs = Vec::new();
            let mut cur = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(syntax(start_line, col, "unterminated template literal"));
                };
                i += 1;
                match ch {
                    '`' => break,
                    '\\' => {
                        i = read_escape(&chars, i, &mut cur, &mut line, &mut line_start)
                            .map_err(|m| syntax(line, col, m))?;
                    }
                    '$' if chars.get(i) == Some(&'{') => {
                        i += 1;
                        let expr_line = line;
                        let start = i;
                        let mut depth = 1;
                        let mut quote: Option<char> = None;
                        while i < chars.len() {
                            let d = chars[i];
                            if d == '\n' {
                                line += 1;
                                line_start = i + 1;
                            }
                            match quote {
                                Some(q) => {
                                    if d == '\\' {
                                        i += 1;
                                    } else if d == q {
                                        quote = None;
                                    }
                                }
                                None => match d {
                                    '"' | '\'' | '`' => quote = Some(d),
                                    '{' => depth += 1,
                                    '}' => {
                                        depth -= 1;
                                        if depth == 0 {
                                            break;
                                        }
                                    }
                                    _ => {}
                                },
                            }
                            i += 1;
                        }
                        if depth != 0 {
                            return Err(syntax(expr_line, col, "unterminated `${` in template"));
                        }
                        exprs.push((chars[start..i].iter().collect(), expr_line));
                        i += 1;
                        quasis.push(std::mem::take(&mut cur));
                    }
                    '\n' => {
                        line += 1;
                        line_start = i;
                        cur.push('\n');
                    }
                    other => cur.push(other),
                }
            }
            quasis.push(cur);
            Tok::Template(quasis, exprs)
        } else {
            if c == '/' {
                let prev_is_value = out.last().is_some_and(|t| match &t.tok {
                    Tok::Num(_) | Tok::Str(_) | Tok::Template(..) => true,
                    Tok::Ident(s) => !matches!(
                        s.as_str(),
                        "return" | "typeof" | "case" | "do" | "else" | "in" | "of" | "new" | "delete" | "void" | "throw" | "await"
                    ),
                    Tok::Punct(p) => matches!(*p, ")" | "]" | "}"),
                    Tok::Eof => false,
                });
                if !prev_is_value {
                    return Err(SandboxError::Unsupported {
                        construct: "regular expression literals".into(),
                        line,
                    });
                }
            }
            let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
            let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
                return Err(syntax(line, col, &format!("unexpected character `{c}`")));
            };
            if *p == "?." && chars.get(i + 2).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                Tok::Punct("?")
            } else {
                i += p.len();
                Tok::Punct(p)
            }
        };
        out.push(Token {
            tok,
            line: start_line,
            col,
            nl_before: nl,
        });
        nl = false;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col: i - line_start + 1,
        nl_before: true,
    });
    Ok(out)
}

fn read_escape(
    chars: &[char],
    mut i: usize,
    s: &mut String,
    line: &mut usize,
    line_start: &mut usize,
) -> Result<usize, &'static str> {
    let Some(&e) = chars.get(i) else {
        return Err("unterminated escape");
    };
    i += 1;
    match e {
        'n' => s.push('\n'),
        't' => s.push('\t'),
        'r' => s.push('\r'),
        'b' => s.push('\u{8}'),
        'f' => s.push('\u{c}'),
        'v' => s.push('\u{b}'),
        '0' => s.push('\0'),
        '\n' => {
            *line += 1;
            *line_start = i;
        }
        'x' => {
            let hex: String = chars.iter().skip(i).take(2).collect();
            let code = u32::from_str_radix(&hex, 16).map_err(|_| "bad \\x escape")?;
            s.push(char::from_u32(code).ok_or("bad \\x escape")?);
            i += 2;
        }
        'u' => {
            let (code, used) = if chars.get(i) == Some(&'{') {
                let end = chars[i..].iter().position(|c| *c == '}').ok_or("bad \\u escape")?;
                let hex: String = chars[i + 1..i + end].iter().collect();
                (u32::from_str_radix(&hex, 16).map_err(|_| "bad \\u escape")?, end + 1)
            } else {
                let hex: String = chars.iter().skip(i).take(4).collect();
                (u32::from_str_radix(&hex, 16).map_err(|_| "bad \\u escape")?, 4)
            };
            s.push(char::from_u32(code).unwrap_or('\u{fffd}'));
            i += used;
        }
        other => s.push(other),
    }
    Ok(i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        tokenize(src, 1).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("const x = a?.b ?? 1.5;"),
            vec![
                Tok::Ident("const".into()),
                Tok::Ident("x".into()),
                Tok::Punct("="),
                Tok::Ident("a".into()),
                Tok::Punct("?."),
                Tok::Ident("b".into()),
                Tok::Punct("??"),
                Tok::Num(1.5),
                Tok::Punct(";"),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn ternary_with_decimal_is_not_optional_chain() {
        assert_eq!(toks("a?.5:1")[1], Tok::Punct("?"));
    }

    #[test]
    fn strings_and_templates() {
        assert_eq!(toks(r#"'a\n"b'"#)[0], Tok::Str("a\n\"b".into()));
        assert_eq!(
            toks("`x ${a + {b:1}.b} y`")[0],
            Tok::Template(vec!["x ".into(), " y".into()], vec![("a + {b:1}.b".into(), 1)])
        );
    }

    #[test]
    fn newline_flag_and_lines() {
        let t = tokenize("a\n  b", 1).unwrap();
        assert!(!t[0].nl_before || t[0].line == 1);
        assert!(t[1].nl_before);
        assert_eq!((t[1].line, t[1].col), (2, 3));
    }

    #[test]
    fn regex_literal_is_unsupported_but_division_is_fine() {
        assert!(matches!(tokenize("x = /ab+/", 1), Err(SandboxError::Unsupported { .. })));
        assert!(tokenize("x = a / b / 2", 1).is_ok());
    }
}
