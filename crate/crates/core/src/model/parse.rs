//! Line-oriented model files.
//!
//! ```text
//! # comment
//! alpha ~ gamma(1, 0.001)
//! p1 ~ beta(alpha, beta) init 0.5
//! y1 ~ binomial(12, p1) data 9
//! s ~ normal_sd(0, 3.16) T(0,)
//! mu <- exp(a0 + 0.5 * a1 - 1)
//! g ~ mvn_expcov(m, sigma, rho) coords 0.1:0.2 0.5:0.9 0.3:0.3
//! ```
//!
//! `~` declares a stochastic node, `<-` a deterministic one. Trailing
//! clauses: `T(0,)` truncates a normal to the positive half line, `data`
//! marks the node as observed, `init` sets starting values and `coords`
//! gives site coordinates for `mvn_expcov`. Numbers within a clause may be
//! separated by spaces or commas.

use super::{DistKind, DistanceMatrix, Distribution, Expr, ModelBuilder, ModelGraph, NameRef};
use crate::error::ModelError;

pub fn parse_model(text: &str) -> Result<ModelGraph, ModelError> {
    let mut builder = ModelBuilder::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        parse_line(&mut builder, line).map_err(|msg| match msg {
            LineError::Model(e) => e,
            LineError::Syntax(msg) => ModelError::Parse { line: i + 1, msg },
        })?;
    }
    builder.build()
}

enum LineError {
    Syntax(String),
    Model(ModelError),
}

impl From<String> for LineError {
    fn from(s: String) -> Self {
        LineError::Syntax(s)
    }
}

fn parse_line(builder: &mut ModelBuilder, line: &str) -> Result<(), LineError> {
    if let Some((name, rhs)) = line.split_once("<-") {
        let name = check_name(name.trim())?;
        let mut lx = Lexer::new(rhs);
        let expr = lx.expr()?;
        lx.expect_end()?;
        builder.deterministic(name, expr);
        return Ok(());
    }
    let Some((name, rhs)) = line.split_once('~') else {
        return Err(format!("expected `~` or `<-` in `{line}`").into());
    };
    let name = check_name(name.trim())?;
    let mut lx = Lexer::new(rhs);
    let dist_name = lx.ident()?;
    let kind = DistKind::from_name(&dist_name)
        .ok_or_else(|| format!("unknown distribution `{dist_name}`"))?;
    lx.eat('(')?;
    let mut args = Vec::new();
    lx.skip_ws();
    if lx.peek() != Some(')') {
        loop {
            args.push(lx.expr()?);
            lx.skip_ws();
            match lx.next() {
                Some(',') => continue,
                Some(')') => break,
                other => return Err(format!("expected `,` or `)`, found {other:?}").into()),
            }
        }
    } else {
        lx.next();
    }

    let mut truncate = false;
    let mut data = None;
    let mut init = None;
    let mut coords = None;
    loop {
        lx.skip_ws();
        if lx.peek().is_none() {
            break;
        }
        if lx.rest().starts_with("T(") {
            lx.expect_str("T(")?;
            lx.skip_ws();
            lx.expect_str("0")?;
            lx.skip_ws();
            lx.expect_str(",")?;
            lx.skip_ws();
            lx.expect_str(")")?;
            truncate = true;
            continue;
        }
        let kw = lx.ident()?;
        let nums = lx.number_list()?;
        match kw.as_str() {
            "data" => data = Some(nums.into_iter().map(|s| parse_num(&s)).collect::<Result<Vec<_>, _>>()?),
            "init" => init = Some(nums.into_iter().map(|s| parse_num(&s)).collect::<Result<Vec<_>, _>>()?),
            "coords" => {
                let mut pts = Vec::new();
                for s in nums {
                    let (x, y) = s
                        .split_once(':')
                        .ok_or_else(|| format!("coordinate `{s}` is not of the form x:y"))?;
                    pts.push((parse_num(x)?, parse_num(y)?));
                }
                coords = Some(DistanceMatrix::from_coords(&pts));
            }
            other => return Err(format!("unknown clause `{other}`").into()),
        }
    }

    let dist = Distribution::from_args(&name, kind, args, coords).map_err(LineError::Model)?;
    let node = builder.stochastic(name, dist);
    if truncate {
        node.truncate_positive();
    }
    if let Some(d) = data {
        node.observe(d);
    }
    if let Some(v) = init {
        node.init(v);
    }
    Ok(())
}

fn check_name(s: &str) -> Result<String, String> {
    let mut chars = s.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
    if ok {
        Ok(s.to_string())
    } else {
        Err(format!("invalid node name `{s}`"))
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("invalid number `{s}`"))
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn next(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.next();
        }
    }

    fn eat(&mut self, c: char) -> Result<(), String> {
        self.skip_ws();
        match self.next() {
            Some(x) if x == c => Ok(()),
            other => Err(format!("expected `{c}`, found {other:?}")),
        }
    }

    fn expect_str(&mut self, s: &str) -> Result<(), String> {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            Ok(())
        } else {
            Err(format!("expected `{s}`"))
        }
    }

    fn expect_end(&mut self) -> Result<(), String> {
        self.skip_ws();
        match self.peek() {
            None => Ok(()),
            Some(c) => Err(format!("unexpected `{c}`")),
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_' || c == '.') {
            self.next();
        }
        let s = &self.src[start..self.pos];
        if s.is_empty() || !s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
            self.pos = start;
            return Err(format!("expected identifier at `{}`", self.rest()));
        }
        Ok(s.to_string())
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.next();
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.next();
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.next();
            if matches!(self.peek(), Some('-') | Some('+')) {
                self.next();
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.next();
                }
            } else {
                self.pos = save;
            }
        }
        match self.src[start..self.pos].parse::<f64>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.pos = start;
                None
            }
        }
    }

    /// Whitespace- or comma-separated tokens up to the next keyword.
    fn number_list(&mut self) -> Result<Vec<String>, String> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(',') {
                self.next();
                continue;
            }
            match self.peek() {
                Some(c) if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                    let start = self.pos;
                    while matches!(self.peek(), Some(c) if !c.is_whitespace() && c != ',') {
                        self.next();
                    }
                    out.push(self.src[start..self.pos].to_string());
                }
                _ => break,
            }
        }
        if out.is_empty() {
            return Err("clause needs at least one value".into());
        }
        Ok(out)
    }

    fn reference(&mut self) -> Result<NameRef, String> {
        let name = self.ident()?;
        if self.peek() == Some('[') {
            self.next();
            let idx = self
                .number()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                .ok_or_else(|| format!("invalid index for `{name}`"))?;
            self.eat(']')?;
            Ok(NameRef::at(name, idx as usize))
        } else {
            Ok(NameRef::new(name))
        }
    }

    fn expr(&mut self) -> Result<Expr<NameRef>, String> {
        self.skip_ws();
        if self.rest().starts_with("exp(") {
            self.pos += 4;
            let (offset, terms) = self.sum()?;
            self.eat(')')?;
            return Ok(Expr::exp_linear(offset, terms));
        }
        let (offset, terms) = self.sum()?;
        Ok(Expr::linear(offset, terms))
    }

    fn sum(&mut self) -> Result<(f64, Vec<(f64, NameRef)>), String> {
        let mut offset = 0.0;
        let mut terms = Vec::new();
        let mut sign = 1.0;
        loop {
            self.skip_ws();
            if let Some(c) = self.number() {
                self.skip_ws();
                if self.peek() == Some('*') {
                    self.next();
                    let r = self.reference()?;
                    terms.push((sign * c, r));
                } else {
                    offset += sign * c;
                }
            } else {
                let r = self.reference()?;
                terms.push((sign, r));
            }
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.next();
                    sign = 1.0;
                }
                Some('-') => {
                    self.next();
                    sign = -1.0;
                }
                _ => break,
            }
        }
        Ok((offset, terms))
    }
}
