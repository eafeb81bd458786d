use super::ast::{QueryExpr, DEFAULT_FUZZY_EDITS, DEFAULT_NEAR_WINDOW, MAX_FUZZY_EDITS};
use super::regex::Regex;
use super::QueryError;
use crate::text::{is_token_char, tokenize};

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    LParen,
    RParen,
    Quoted(String),
    Range {
        low: String,
        high: String,
        inclusive: bool,
    },
    Regex(String),
    Word(String),
}

#[derive(Debug, Clone)]
struct Tok {
    lex: Lexeme,
    /// Character offset of the token in the input.
    pos: usize,
}

const KEYWORDS: [&str; 3] = ["AND", "OR", "NOT"];

fn is_word_boundary(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '"' | '[' | ']' | '{' | '}')
}

fn lex(input: &str) -> Result<Vec<Tok>, QueryError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            _ if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Tok { lex: Lexeme::LParen, pos: i });
                i += 1;
            }
            ')' => {
                out.push(Tok { lex: Lexeme::RParen, pos: i });
                i += 1;
            }
            '"' => {
                let close = chars[i + 1..]
                    .iter()
                    .position(|&c| c == '"')
                    .ok_or_else(|| QueryError::parse(start, "unbalanced quote"))?;
                let body: String = chars[i + 1..i + 1 + close].iter().collect();
                out.push(Tok { lex: Lexeme::Quoted(body), pos: start });
                i += close + 2;
            }
            '[' | '{' => {
                let (closer, inclusive) = if c == '[' { (']', true) } else { ('}', false) };
                let close = chars[i + 1..]
                    .iter()
                    .position(|&c| c == closer)
                    .ok_or_else(|| QueryError::parse(start, "unterminated range"))?;
                let body: String = chars[i + 1..i + 1 + close].iter().collect();
                let parts: Vec<&str> = body.split_whitespace().collect();
                if parts.len() != 3 || parts[1] != "TO" {
                    return Err(QueryError::parse(start, "range must be written [low TO high]"));
                }
                out.push(Tok {
                    lex: Lexeme::Range {
                        low: parts[0].to_string(),
                        high: parts[2].to_string(),
                        inclusive,
                    },
                    pos: start,
                });
                i += close + 2;
            }
            ']' | '}' => return Err(QueryError::parse(start, "unbalanced range bracket")),
            '/' => {
                let mut j = i + 1;
                let mut body = String::new();
                loop {
                    match chars.get(j) {
                        None => return Err(QueryError::parse(start, "unterminated regex")),
                        Some('\\') if chars.get(j + 1).is_some() => {
                            body.push('\\');
                            body.push(chars[j + 1]);
                            j += 2;
                        }
                        Some('/') => break,
                        Some(&ch) => {
                            body.push(ch);
                            j += 1;
                        }
                    }
                }
                out.push(Tok { lex: Lexeme::Regex(body), pos: start });
                i = j + 1;
            }
            _ => {
                while i < chars.len() && !is_word_boundary(chars[i]) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(Tok { lex: Lexeme::Word(word), pos: start });
            }
        }
    }
    Ok(out)
}

fn near_window(word: &str) -> Option<Result<u32, ()>> {
    if word == "NEAR" {
        return Some(Ok(DEFAULT_NEAR_WINDOW));
    }
    let rest = word.strip_prefix("NEAR/")?;
    Some(rest.parse::<u32>().map_err(|_| ()))
}

fn is_operator(word: &str) -> bool {
    KEYWORDS.contains(&word) || near_window(word).is_some()
}

fn has_meta(word: &str) -> bool {
    word.contains(['*', '?', '~'])
}

/// Lowercases the way the tokenizer does, keeping wildcard metacharacters.
fn fold_pattern(pattern: &str, pos: usize) -> Result<String, QueryError> {
    let mut out = String::new();
    for c in pattern.chars() {
        if c == '*' || c == '?' {
            out.push(c);
        } else if is_token_char(c) {
            out.extend(c.to_lowercase().filter(|l| is_token_char(*l)));
        } else {
            return Err(QueryError::parse(
                pos,
                format!("character {c:?} not allowed in wildcard {pattern:?}"),
            ));
        }
    }
    Ok(out)
}

fn single_token(raw: &str, pos: usize, what: &str) -> Result<String, QueryError> {
    let toks = tokenize(raw);
    match toks.len() {
        1 => Ok(toks.into_iter().next().unwrap().text),
        0 => Err(QueryError::parse(pos, format!("empty {what}"))),
        _ => Err(QueryError::parse(pos, format!("{what} {raw:?} must be a single term"))),
    }
}

/// Tokenizes text into a term (one token) or a phrase (several).
fn text_expr(raw: &str, pos: usize) -> Result<QueryExpr, QueryError> {
    let toks: Vec<String> = tokenize(raw).into_iter().map(|t| t.text).collect();
    match toks.len() {
        0 => Err(QueryError::parse(pos, "empty phrase")),
        1 => Ok(QueryExpr::Term(toks.into_iter().next().unwrap())),
        _ => Ok(QueryExpr::Phrase(toks)),
    }
}

struct Parser {
    toks: Vec<Tok>,
    i: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i)
    }

    fn pos(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok { lex: Lexeme::Word(w), .. }) => Some(w),
            _ => None,
        }
    }

    fn or(&mut self) -> Result<QueryExpr, QueryError> {
        let mut children = vec![self.and()?];
        while self.peek_word() == Some("OR") {
            self.i += 1;
            children.push(self.and()?);
        }
        Ok(collapse(children, QueryExpr::Or))
    }

    fn and(&mut self) -> Result<QueryExpr, QueryError> {
        let mut children = vec![self.unary()?];
        while self.peek_word() == Some("AND") {
            self.i += 1;
            children.push(self.unary()?);
        }
        Ok(collapse(children, QueryExpr::And))
    }

    fn unary(&mut self) -> Result<QueryExpr, QueryError> {
        if self.peek_word() == Some("NOT") {
            self.i += 1;
            if self.peek_word() == Some("NOT") {
                return Err(QueryError::parse(self.pos(), "double negation"));
            }
            return Ok(QueryExpr::not(self.primary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<QueryExpr, QueryError> {
        if matches!(self.peek(), Some(Tok { lex: Lexeme::LParen, .. })) {
            let open = self.pos();
            self.i += 1;
            let inner = self.or()?;
            match self.peek() {
                Some(Tok { lex: Lexeme::RParen, .. }) => {
                    self.i += 1;
                    Ok(inner)
                }
                _ => Err(QueryError::parse(open, "unbalanced parenthesis")),
            }
        } else {
            let left_pos = self.pos();
            let left = self.atom()?;
            let Some(window) = self.peek_word().and_then(near_window) else {
                return Ok(left);
            };
            let near_pos = self.pos();
            let window = window
                .ok()
                .filter(|w| *w >= 1)
                .ok_or_else(|| QueryError::parse(near_pos, "NEAR window must be an integer >= 1"))?;
            self.i += 1;
            let right_pos = self.pos();
            let right = self.atom()?;
            for (side, pos) in [(&left, left_pos), (&right, right_pos)] {
                if !side.is_span_operand() {
                    return Err(QueryError::parse(pos, "NEAR operands must be terms or phrases"));
                }
            }
            Ok(QueryExpr::near(left, right, window))
        }
    }

    fn atom(&mut self) -> Result<QueryExpr, QueryError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(QueryError::parse(self.end, "unexpected end of query"));
        };
        let pos = tok.pos;
        match tok.lex {
            Lexeme::Quoted(body) => {
                self.i += 1;
                text_expr(&body, pos)
            }
            Lexeme::Range {
                low,
                high,
                inclusive,
            } => {
                self.i += 1;
                let low = single_token(&low, pos, "range bound")?;
                let high = single_token(&high, pos, "range bound")?;
                Ok(QueryExpr::Range {
                    low,
                    high,
                    inclusive,
                })
            }
            Lexeme::Regex(body) => {
                self.i += 1;
                Regex::new(&body).map_err(|e| {
                    QueryError::parse(pos + 1 + e.position, format!("invalid regex: {}", e.message))
                })?;
                Ok(QueryExpr::Regex(body))
            }
            Lexeme::Word(w) if is_operator(&w) => {
                Err(QueryError::parse(pos, format!("unexpected operator {w}")))
            }
            Lexeme::Word(first) => {
                self.i += 1;
                if has_meta(&first) {
                    return self.meta_word(&first, pos);
                }
                // a run of bare words is a phrase
                let mut words = vec![first];
                while let Some(w) = self.peek_word() {
                    if is_operator(w) {
                        break;
                    }
                    if has_meta(w) {
                        return Err(QueryError::parse(
                            self.pos(),
                            format!("{w:?} cannot appear inside a phrase"),
                        ));
                    }
                    words.push(w.to_string());
                    self.i += 1;
                }
                text_expr(&words.join(" "), pos)
            }
            Lexeme::LParen | Lexeme::RParen => {
                Err(QueryError::parse(pos, "unexpected parenthesis"))
            }
        }
    }

    fn meta_word(&mut self, word: &str, pos: usize) -> Result<QueryExpr, QueryError> {
        if let Some((base, edits)) = word.rsplit_once('~') {
            if base.contains(['*', '?', '~']) {
                return Err(QueryError::parse(pos, format!("invalid fuzzy term {word:?}")));
            }
            let term = single_token(base, pos, "fuzzy term")?;
            let max_edits = if edits.is_empty() {
                DEFAULT_FUZZY_EDITS
            } else {
                let n: u32 = edits.parse().map_err(|_| {
                    QueryError::parse(pos, format!("invalid fuzzy edit count {edits:?}"))
                })?;
                if n > MAX_FUZZY_EDITS as u32 {
                    return Err(QueryError::parse(
                        pos,
                        format!("fuzzy edits {n} exceed the maximum of {MAX_FUZZY_EDITS}"),
                    ));
                }
                n as u8
            };
            return Ok(QueryExpr::Fuzzy { term, max_edits });
        }
        Ok(QueryExpr::Wildcard(fold_pattern(word, pos)?))
    }
}

fn collapse(mut children: Vec<QueryExpr>, wrap: fn(Vec<QueryExpr>) -> QueryExpr) -> QueryExpr {
    if children.len() == 1 {
        children.pop().unwrap()
    } else {
        wrap(children)
    }
}

/// Parses a rule query string into an expression.
pub fn parse(input: &str) -> Result<QueryExpr, QueryError> {
    let toks = lex(input)?;
    if toks.is_empty() {
        return Err(QueryError::parse(0, "empty query"));
    }
    let mut p = Parser {
        toks,
        i: 0,
        end: input.chars().count(),
    };
    let expr = p.or()?;
    if let Some(tok) = p.peek() {
        let msg = match &tok.lex {
            Lexeme::RParen => "unbalanced parenthesis".to_string(),
            _ => "expected AND, OR or end of query".to_string(),
        };
        return Err(QueryError::parse(tok.pos, msg));
    }
    if matches!(expr, QueryExpr::Not(_)) {
        return Err(QueryError::parse(0, "top-level negation has no match set"));
    }
    expr.validate()
        .map_err(|e| QueryError::parse(0, e.to_string()))?;
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use QueryExpr as Q;

    fn p(s: &str) -> QueryExpr {
        parse(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    fn err_pos(s: &str) -> usize {
        match parse(s) {
            Err(QueryError::Parse { position, .. }) => position,
            other => panic!("{s}: expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn term_table_examples() {
        assert_eq!(
            p("scream AND sleep"),
            Q::And(vec![Q::term("scream"), Q::term("sleep")])
        );
        assert_eq!(
            p("act out NEAR/10 nightmare"),
            Q::near(Q::phrase(["act", "out"]), Q::term("nightmare"), 10)
        );
        assert_eq!(p("enact my dream"), Q::phrase(["enact", "my", "dream"]));
        assert_eq!(p("\"enact my dream\""), Q::phrase(["enact", "my", "dream"]));
    }

    #[test]
    fn atoms() {
        assert_eq!(
            p("tremer~"),
            Q::Fuzzy {
                term: "tremer".into(),
                max_edits: 2
            }
        );
        assert_eq!(
            p("Tremor~1"),
            Q::Fuzzy {
                term: "tremor".into(),
                max_edits: 1
            }
        );
        assert_eq!(p("Trem*"), Q::Wildcard("trem*".into()));
        assert_eq!(p("t?emor"), Q::Wildcard("t?emor".into()));
        assert_eq!(p("/trem(or|bling)/"), Q::Regex("trem(or|bling)".into()));
        assert_eq!(
            p("[a TO c]"),
            Q::Range {
                low: "a".into(),
                high: "c".into(),
                inclusive: true
            }
        );
        assert_eq!(
            p("{a TO c}"),
            Q::Range {
                low: "a".into(),
                high: "c".into(),
                inclusive: false
            }
        );
        assert_eq!(p("hand-tremor"), Q::phrase(["hand", "tremor"]));
        assert_eq!(p("\"sleep\""), Q::term("sleep"));
        assert_eq!(p("thrash NEAR dream"), Q::near(Q::term("thrash"), Q::term("dream"), 10));
    }

    #[test]
    fn precedence_and_grouping() {
        assert_eq!(
            p("a OR b AND c"),
            Q::Or(vec![Q::term("a"), Q::And(vec![Q::term("b"), Q::term("c")])])
        );
        assert_eq!(
            p("(a OR b) AND NOT c"),
            Q::And(vec![
                Q::Or(vec![Q::term("a"), Q::term("b")]),
                Q::not(Q::term("c"))
            ])
        );
        assert_eq!(
            p("tremor AND NOT internal tremor"),
            Q::And(vec![
                Q::term("tremor"),
                Q::not(Q::phrase(["internal", "tremor"]))
            ])
        );
    }

    #[test]
    fn errors() {
        assert_eq!(err_pos("NOT sleep"), 0);
        assert_eq!(err_pos("\"open phrase"), 0);
        assert_eq!(err_pos("a AND (b OR c"), 6);
        assert_eq!(err_pos("a)"), 1);
        assert_eq!(err_pos("tremor~3"), 0);
        assert_eq!(err_pos("x AND /ab(/"), 10);
        assert_eq!(err_pos("\"!!\""), 0);
        assert_eq!(err_pos("a NEAR/0 b"), 2);
        assert_eq!(err_pos("a NEAR/10 b*"), 10);
        assert_eq!(err_pos("a OR NOT b"), 0);
        assert_eq!(err_pos("a AND"), 5);
        assert_eq!(err_pos(""), 0);
        assert_eq!(err_pos("big trem*"), 4);
        assert_eq!(err_pos("x \"a b\""), 2);
    }
}
