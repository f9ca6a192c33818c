//! Tokenizer for HL source text.
//!
//! String literals are tokenized together with their interpolations: a
//! `$name` or `$(expr)` section becomes a nested token stream that the
//! parser turns into a StringInterp child.

use super::SyntaxError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(Vec<StrPart>),
    // punctuation / operators
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Ellipsis,
    At,
    Colon,
    ColonColon,
    Arrow,
    Assign,
    PlusAssign,
    EqEq,
    NotEq,
    Lt,
    Gt,
    Le,
    Ge,
    Plus,
    Minus,
    Star,
    Slash,
    AndAnd,
    OrOr,
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrPart {
    Text(String),
    Interp(Vec<Token>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    /// Line where the token ends; differs from `line` only for string
    /// literals with multiline interpolations.
    pub end_line: u32,
}

pub fn lex(source: &str, file: &str, start_line: u32) -> Result<Vec<Token>, SyntaxError> {
    let mut lx = Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: start_line,
        file: file.to_string(),
    };
    lx.run()
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    file: String,
}

impl Lexer {
    fn run(&mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let line = self.line;
            let Some(c) = self.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    line,
                    end_line: line,
                });
                return Ok(out);
            };
            let tok = self.next_token(c)?;
            out.push(Token {
                tok,
                line,
                end_line: self.line,
            });
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if let Some(c) = c {
            self.pos += 1;
            if c == '\n' {
                self.line += 1;
            }
        }
        c
    }

    fn error(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError {
            file: self.file.clone(),
            line: self.line,
            message: msg.into(),
        }
    }

    fn skip_trivia(&mut self) -> Result<(), SyntaxError> {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    if self.peek_at(1) == Some('=') {
                        self.skip_block_comment()?;
                    } else {
                        while let Some(c) = self.peek() {
                            if c == '\n' {
                                break;
                            }
                            self.bump();
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn skip_block_comment(&mut self) -> Result<(), SyntaxError> {
        let start = self.line;
        self.bump();
        self.bump(); // consume '#='
        let mut depth = 1usize;
        while depth > 0 {
            match (self.peek(), self.peek_at(1)) {
                (Some('#'), Some('=')) => {
                    self.bump();
                    self.bump();
                    depth += 1;
                }
                (Some('='), Some('#')) => {
                    self.bump();
                    self.bump();
                    depth -= 1;
                }
                (Some(_), _) => {
                    self.bump();
                }
                (None, _) => {
                    return Err(SyntaxError {
                        file: self.file.clone(),
                        line: start,
                        message: "unterminated block comment".into(),
                    })
                }
            }
        }
        Ok(())
    }

    fn next_token(&mut self, c: char) -> Result<Tok, SyntaxError> {
        if c.is_ascii_digit() {
            return self.number();
        }
        if c.is_alphabetic() || c == '_' {
            return Ok(self.ident());
        }
        if c == '"' {
            return self.string();
        }
        self.bump();
        let two = |lx: &mut Lexer, tok: Tok| {
            lx.bump();
            tok
        };
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            ';' => Tok::Semi,
            '@' => Tok::At,
            '+' => match self.peek() {
                Some('=') => two(self, Tok::PlusAssign),
                _ => Tok::Plus,
            },
            '-' => match self.peek() {
                Some('>') => two(self, Tok::Arrow),
                _ => Tok::Minus,
            },
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '=' => match self.peek() {
                Some('=') => two(self, Tok::EqEq),
                _ => Tok::Assign,
            },
            '!' => match self.peek() {
                Some('=') => two(self, Tok::NotEq),
                _ => return Err(self.error("unexpected character '!'")),
            },
            '<' => match self.peek() {
                Some('=') => two(self, Tok::Le),
                _ => Tok::Lt,
            },
            '>' => match self.peek() {
                Some('=') => two(self, Tok::Ge),
                _ => Tok::Gt,
            },
            ':' => match self.peek() {
                Some(':') => two(self, Tok::ColonColon),
                _ => Tok::Colon,
            },
            '&' => match self.peek() {
                Some('&') => two(self, Tok::AndAnd),
                _ => return Err(self.error("unexpected character '&'")),
            },
            '|' => match self.peek() {
                Some('|') => two(self, Tok::OrOr),
                _ => return Err(self.error("unexpected character '|'")),
            },
            '.' => {
                if self.peek() == Some('.') && self.peek_at(1) == Some('.') {
                    self.bump();
                    self.bump();
                    Tok::Ellipsis
                } else {
                    Tok::Dot
                }
            }
            other => return Err(self.error(format!("unexpected character '{other}'"))),
        };
        Ok(tok)
    }

    fn number(&mut self) -> Result<Tok, SyntaxError> {
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let mut is_float = false;
        // a '.' is part of the number only when followed by a digit, so that
        // ranges like 1:10 and field access on call results stay lexable
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) {
            is_float = true;
            text.push('.');
            self.bump();
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
        }
        if matches!(self.peek(), Some('e') | Some('E'))
            && self
                .peek_at(1)
                .is_some_and(|c| c.is_ascii_digit() || c == '+' || c == '-')
        {
            is_float = true;
            text.push('e');
            self.bump();
            if matches!(self.peek(), Some('+') | Some('-')) {
                text.push(self.bump().unwrap());
            }
            if !self.peek().is_some_and(|c| c.is_ascii_digit()) {
                return Err(self.error("malformed exponent"));
            }
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    text.push(c);
                    self.bump();
                } else {
                    break;
                }
            }
        }
        if is_float {
            text.parse::<f64>()
                .map(Tok::Float)
                .map_err(|_| self.error(format!("invalid float literal '{text}'")))
        } else {
            text.parse::<i64>()
                .map(Tok::Int)
                .map_err(|_| self.error(format!("integer literal out of range '{text}'")))
        }
    }

    fn ident(&mut self) -> Tok {
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        // trailing '!' is part of the name (push!, pop!), unless it starts '!='
        if self.peek() == Some('!') && self.peek_at(1) != Some('=') {
            text.push('!');
            self.bump();
        }
        Tok::Ident(text)
    }

    fn string(&mut self) -> Result<Tok, SyntaxError> {
        let start_line = self.line;
        self.bump(); // opening quote
        let mut parts: Vec<StrPart> = Vec::new();
        let mut text = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(SyntaxError {
                    file: self.file.clone(),
                    line: start_line,
                    message: "unterminated string literal".into(),
                });
            };
            match c {
                '"' => {
                    self.bump();
                    break;
                }
                '\\' => {
                    self.bump();
                    let esc = self
                        .bump()
                        .ok_or_else(|| self.error("unterminated escape sequence"))?;
                    match esc {
                        'n' => text.push('\n'),
                        't' => text.push('\t'),
                        '\\' => text.push('\\'),
                        '"' => text.push('"'),
                        '$' => text.push('$'),
                        other => {
                            return Err(self.error(format!("unknown escape '\\{other}'")));
                        }
                    }
                }
                '$' => {
                    if !text.is_empty() {
                        parts.push(StrPart::Text(std::mem::take(&mut text)));
                    }
                    self.bump();
                    parts.push(self.interpolation()?);
                }
                _ => {
                    text.push(c);
                    self.bump();
                }
            }
        }
        if !text.is_empty() || parts.is_empty() {
            parts.push(StrPart::Text(text));
        }
        Ok(Tok::Str(parts))
    }

    /// After the `$`: either an identifier or a parenthesized expression.
    fn interpolation(&mut self) -> Result<StrPart, SyntaxError> {
        match self.peek() {
            Some('(') => {
                let line = self.line;
                self.bump();
                let src = self.balanced_parens()?;
                let mut toks = lex(&src, &self.file, line)?;
                // keep the Eof sentinel for the sub-parser
                if toks.is_empty() {
                    toks.push(Token {
                        tok: Tok::Eof,
                        line,
                        end_line: line,
                    });
                }
                Ok(StrPart::Interp(toks))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let line = self.line;
                let tok = self.ident();
                Ok(StrPart::Interp(vec![
                    Token {
                        tok,
                        line,
                        end_line: line,
                    },
                    Token {
                        tok: Tok::Eof,
                        line,
                        end_line: line,
                    },
                ]))
            }
            _ => Err(self.error("expected identifier or '(' after '$' in string")),
        }
    }

    /// Collects the source text up to the matching ')', honoring nested
    /// parens and string literals.
    fn balanced_parens(&mut self) -> Result<String, SyntaxError> {
        let mut depth = 1usize;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("unterminated interpolation"));
            };
            match c {
                '(' => {
                    depth += 1;
                    out.push(c);
                    self.bump();
                }
                ')' => {
                    depth -= 1;
                    self.bump();
                    if depth == 0 {
                        return Ok(out);
                    }
                    out.push(c);
                }
                '"' => {
                    out.push('"');
                    self.bump();
                    loop {
                        let Some(s) = self.bump() else {
                            return Err(self.error("unterminated string literal"));
                        };
                        out.push(s);
                        if s == '\\' {
                            if let Some(e) = self.bump() {
                                out.push(e);
                            }
                        } else if s == '"' {
                            break;
                        }
                    }
                }
                _ => {
                    out.push(c);
                    self.bump();
                }
            }
        }
    }
}
