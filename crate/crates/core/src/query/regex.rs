//! A small regular-expression dialect for term matching.
//!
//! Supported: literals, `.`, character classes (`[abc]`, `[a-z]`, `[^...]`),
//! the escapes `\d`, `\w`, `\s` and `\<char>`, grouping `( )`, alternation
//! `|` and the quantifiers `*`, `+`, `?`. Matching is always against the
//! whole term, so anchors are implicit and `^`/`$` are rejected.
//!
//! Patterns compile to a Thompson NFA simulated with state sets, so matching
//! is linear in the term length.

use std::fmt;

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegexError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for RegexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.position)
    }
}

impl std::error::Error for RegexError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ClassItem {
    Range(char, char),
    Digit,
    Word,
    Space,
}

impl ClassItem {
    fn matches(&self, c: char) -> bool {
        match *self {
            ClassItem::Range(lo, hi) => lo <= c && c <= hi,
            ClassItem::Digit => c.is_ascii_digit(),
            ClassItem::Word => c.is_alphanumeric() || c == '_',
            ClassItem::Space => c.is_whitespace(),
        }
    }

    fn example(&self) -> char {
        match *self {
            ClassItem::Range(lo, _) => lo,
            ClassItem::Digit => '0',
            ClassItem::Word => 'a',
            ClassItem::Space => ' ',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Empty,
    Char(char),
    Any,
    Class { items: Vec<ClassItem>, negated: bool },
    Concat(Vec<Node>),
    Alt(Vec<Node>),
    Star(Box<Node>),
    Plus(Box<Node>),
    Quest(Box<Node>),
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, RegexError> {
        Err(RegexError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn alt(&mut self) -> Result<Node, RegexError> {
        let mut branches = vec![self.concat()?];
        while self.peek() == Some('|') {
            self.pos += 1;
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Node::Alt(branches)
        })
    }

    fn concat(&mut self) -> Result<Node, RegexError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            items.push(self.repeat()?);
        }
        Ok(match items.len() {
            0 => Node::Empty,
            1 => items.pop().unwrap(),
            _ => Node::Concat(items),
        })
    }

    fn repeat(&mut self) -> Result<Node, RegexError> {
        let mut node = self.atom()?;
        while let Some(c) = self.peek() {
            node = match c {
                '*' => Node::Star(Box::new(node)),
                '+' => Node::Plus(Box::new(node)),
                '?' => Node::Quest(Box::new(node)),
                _ => break,
            };
            self.pos += 1;
        }
        Ok(node)
    }

    fn atom(&mut self) -> Result<Node, RegexError> {
        let c = self.peek().expect("atom called at end");
        match c {
            '(' => {
                self.pos += 1;
                let inner = self.alt()?;
                if self.peek() != Some(')') {
                    return self.err("unclosed group");
                }
                self.pos += 1;
                Ok(inner)
            }
            '[' => self.class(),
            '.' => {
                self.pos += 1;
                Ok(Node::Any)
            }
            '\\' => {
                self.pos += 1;
                let Some(e) = self.peek() else {
                    return self.err("dangling escape");
                };
                self.pos += 1;
                Ok(match e {
                    'd' => Node::Class { items: vec![ClassItem::Digit], negated: false },
                    'w' => Node::Class { items: vec![ClassItem::Word], negated: false },
                    's' => Node::Class { items: vec![ClassItem::Space], negated: false },
                    other => Node::Char(other),
                })
            }
            '*' | '+' | '?' => self.err("quantifier without operand"),
            '^' | '$' => self.err("anchors are implicit; escape the character to match it"),
            ']' => self.err("unmatched ']'"),
            _ => {
                self.pos += 1;
                Ok(Node::Char(c))
            }
        }
    }

    fn class_char(&mut self) -> Result<ClassItem, RegexError> {
        let Some(c) = self.peek() else {
            return self.err("unclosed character class");
        };
        self.pos += 1;
        if c != '\\' {
            return Ok(ClassItem::Range(c, c));
        }
        let Some(e) = self.peek() else {
            return self.err("dangling escape");
        };
        self.pos += 1;
        Ok(match e {
            'd' => ClassItem::Digit,
            'w' => ClassItem::Word,
            's' => ClassItem::Space,
            other => ClassItem::Range(other, other),
        })
    }

    fn class(&mut self) -> Result<Node, RegexError> {
        let open = self.pos;
        self.pos += 1;
        let negated = self.peek() == Some('^');
        if negated {
            self.pos += 1;
        }
        let mut items = Vec::new();
        loop {
            match self.peek() {
                None => {
                    self.pos = open;
                    return self.err("unclosed character class");
                }
                Some(']') => {
                    self.pos += 1;
                    break;
                }
                Some(_) => {
                    let first = self.class_char()?;
                    if self.peek() == Some('-') && self.chars.get(self.pos + 1) != Some(&']') {
                        self.pos += 1;
                        let last = self.class_char()?;
                        match (first, last) {
                            (ClassItem::Range(lo, _), ClassItem::Range(hi, _)) if lo <= hi => {
                                items.push(ClassItem::Range(lo, hi))
                            }
                            _ => return self.err("invalid class range"),
                        }
                    } else {
                        items.push(first);
                    }
                }
            }
        }
        if items.is_empty() {
            self.pos = open;
            return self.err("empty character class");
        }
        Ok(Node::Class { items, negated })
    }
}

#[derive(Debug, Clone)]
enum State {
    Char(char, usize),
    Any(usize),
    Class(Vec<ClassItem>, bool, usize),
    Split(usize, usize),
    /// Placeholder while compiling loops.
    Hole,
    Match,
}

#[derive(Debug, Clone)]
pub struct Regex {
    pattern: String,
    root: Node,
    states: Vec<State>,
    start: usize,
}

impl PartialEq for Regex {
    fn eq(&self, other: &Self) -> bool {
        self.pattern == other.pattern
    }
}

impl Regex {
    pub fn new(pattern: &str) -> Result<Regex, RegexError> {
        let mut p = Parser {
            chars: pattern.chars().collect(),
            pos: 0,
        };
        let root = p.alt()?;
        if p.pos != p.chars.len() {
            return p.err("unmatched ')'");
        }
        let mut states = vec![State::Match];
        let start = compile(&root, 0, &mut states);
        Ok(Regex {
            pattern: pattern.to_string(),
            root,
            states,
            start,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.pattern
    }

    /// Whole-string match.
    pub fn is_match(&self, text: &str) -> bool {
        let n = self.states.len();
        let mut cur = Vec::with_capacity(n);
        let mut next = Vec::with_capacity(n);
        let mut seen = vec![usize::MAX; n];
        let mut stamp = 0usize;
        self.add(self.start, &mut cur, &mut seen, stamp);
        for c in text.chars() {
            stamp += 1;
            next.clear();
            for &s in &cur {
                let target = match &self.states[s] {
                    State::Char(x, out) if *x == c => Some(*out),
                    State::Any(out) => Some(*out),
                    State::Class(items, negated, out)
                        if items.iter().any(|i| i.matches(c)) != *negated =>
                    {
                        Some(*out)
                    }
                    _ => None,
                };
                if let Some(t) = target {
                    self.add(t, &mut next, &mut seen, stamp);
                }
            }
            std::mem::swap(&mut cur, &mut next);
            if cur.is_empty() {
                return false;
            }
        }
        cur.iter().any(|&s| matches!(self.states[s], State::Match))
    }

    fn add(&self, s: usize, list: &mut Vec<usize>, seen: &mut [usize], stamp: usize) {
        if seen[s] == stamp {
            return;
        }
        seen[s] = stamp;
        match self.states[s] {
            State::Split(a, b) => {
                self.add(a, list, seen, stamp);
                self.add(b, list, seen, stamp);
            }
            _ => list.push(s),
        }
    }

    /// Literal characters every match must start with, used to bound
    /// dictionary scans.
    pub fn literal_prefix(&self) -> String {
        match &self.root {
            Node::Char(c) => c.to_string(),
            Node::Concat(items) => items
                .iter()
                .map_while(|n| match n {
                    Node::Char(c) => Some(*c),
                    _ => None,
                })
                .collect(),
            _ => String::new(),
        }
    }

    /// Draws a random string matched by the pattern (loops unrolled 0..=2
    /// times). Used by the synthetic corpus generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        let mut out = String::new();
        sample_node(&self.root, rng, &mut out);
        out
    }
}

fn sample_node<R: Rng + ?Sized>(node: &Node, rng: &mut R, out: &mut String) {
    match node {
        Node::Empty => {}
        Node::Char(c) => out.push(*c),
        Node::Any => out.push('a'),
        Node::Class { items, negated: false } => {
            let item = &items[rng.random_range(0..items.len())];
            out.push(match *item {
                ClassItem::Range(lo, hi) => {
                    char::from_u32(rng.random_range(lo as u32..=hi as u32)).unwrap_or(lo)
                }
                ref other => other.example(),
            });
        }
        Node::Class { items, negated: true } => {
            let c = ('a'..='z')
                .chain('0'..='9')
                .find(|c| !items.iter().any(|i| i.matches(*c)))
                .unwrap_or('~');
            out.push(c);
        }
        Node::Concat(items) => items.iter().for_each(|n| sample_node(n, rng, out)),
        Node::Alt(branches) => sample_node(&branches[rng.random_range(0..branches.len())], rng, out),
        Node::Star(inner) => {
            for _ in 0..rng.random_range(0..=2) {
                sample_node(inner, rng, out);
            }
        }
        Node::Plus(inner) => {
            for _ in 0..rng.random_range(1..=2) {
                sample_node(inner, rng, out);
            }
        }
        Node::Quest(inner) => {
            if rng.random_bool(0.5) {
                sample_node(inner, rng, out);
            }
        }
    }
}

/// Compiles `node` so that it continues at state `next`; returns its entry.
fn compile(node: &Node, next: usize, states: &mut Vec<State>) -> usize {
    let push = |states: &mut Vec<State>, s: State| {
        states.push(s);
        states.len() - 1
    };
    match node {
        Node::Empty => next,
        Node::Char(c) => push(states, State::Char(*c, next)),
        Node::Any => push(states, State::Any(next)),
        Node::Class { items, negated } => push(states, State::Class(items.clone(), *negated, next)),
        Node::Concat(items) => items
            .iter()
            .rev()
            .fold(next, |acc, n| compile(n, acc, states)),
        Node::Alt(branches) => {
            let entries: Vec<usize> = branches.iter().map(|b| compile(b, next, states)).collect();
            entries
                .into_iter()
                .rev()
                .reduce(|acc, e| push(states, State::Split(e, acc)))
                .unwrap()
        }
        Node::Star(inner) => {
            let split = push(states, State::Hole);
            let body = compile(inner, split, states);
            states[split] = State::Split(body, next);
            split
        }
        Node::Plus(inner) => {
            let split = push(states, State::Hole);
            let body = compile(inner, split, states);
            states[split] = State::Split(body, next);
            body
        }
        Node::Quest(inner) => {
            let body = compile(inner, next, states);
            push(states, State::Split(body, next))
        }
    }
}
