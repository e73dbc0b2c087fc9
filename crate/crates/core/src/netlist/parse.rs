use super::{validate, BinOp, BoxDecl, BoxInput, BoxOutput, Expr, Init, Netlist, Port, Register, Role, Wire};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    /// `syntax` for lexical/grammar errors, otherwise the validation code.
    pub code: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.col, self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

struct Tokens<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    pos: usize,
    line: usize,
    eol_col: usize,
}

fn tokenize(line: &str) -> Vec<(Tok<'_>, usize)> {
    let code = match line.find(';') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let bytes = code.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((Tok::Open, i + 1));
                i += 1;
            }
            b')' => {
                out.push((Tok::Close, i + 1));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b'(' | b')') && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push((Tok::Atom(&code[start..i]), start + 1));
            }
        }
    }
    out
}

impl<'a> Tokens<'a> {
    fn new(line: &'a str, lineno: usize) -> Self {
        Tokens {
            toks: tokenize(line),
            pos: 0,
            line: lineno,
            eol_col: line.len() + 1,
        }
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.eol_col)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col(),
            code: "syntax".into(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok<'a>> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Tok<'a>> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn atom(&mut self, what: &str) -> Result<&'a str, ParseError> {
        match self.peek() {
            Some(Tok::Atom(a)) => {
                let a = *a;
                self.pos += 1;
                Ok(a)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Atom(a)) if *a == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`"))),
        }
    }

    fn open(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Open) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("expected `(`")),
        }
    }

    fn close(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err("expected `)`")),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        let col = self.col();
        let a = self.atom("identifier")?;
        if !is_ident(a) {
            return Err(ParseError {
                line: self.line,
                col,
                code: "syntax".into(),
                message: format!("invalid identifier `{a}`"),
            });
        }
        Ok(a.to_string())
    }

    fn uint(&mut self, what: &str) -> Result<u64, ParseError> {
        let col = self.col();
        let a = self.atom(what)?;
        parse_uint(a).ok_or_else(|| ParseError {
            line: self.line,
            col,
            code: "syntax".into(),
            message: format!("expected {what}, found `{a}`"),
        })
    }

    fn width(&mut self) -> Result<u32, ParseError> {
        let col = self.col();
        let w = self.uint("width")?;
        if w == 0 || w > super::MAX_WIDTH as u64 {
            return Err(ParseError {
                line: self.line,
                col,
                code: "syntax".into(),
                message: format!("width {w} outside 1..=64"),
            });
        }
        Ok(w as u32)
    }

    fn role(&mut self) -> Result<Role, ParseError> {
        let col = self.col();
        let a = self.atom("`control` or `data`")?;
        a.parse().map_err(|m| ParseError {
            line: self.line,
            col,
            code: "syntax".into(),
            message: m,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Tok::Atom(a)) => {
                if is_ident(a) {
                    Ok(Expr::Ref(a.to_string()))
                } else {
                    self.pos -= 1;
                    Err(self.err(format!("expected expression, found `{a}`")))
                }
            }
            Some(Tok::Open) => {
                let op = self.atom("operator")?;
                let e = match op {
                    "const" => {
                        let width = self.width()?;
                        let value = self.uint("constant value")?;
                        Expr::Const { width, value }
                    }
                    "not" => Expr::not(self.expr()?),
                    "mux" => {
                        let c = self.expr()?;
                        let a = self.expr()?;
                        let b = self.expr()?;
                        Expr::mux(c, a, b)
                    }
                    "shl" | "shr" => {
                        let a = self.expr()?;
                        let n = self.uint("shift amount")? as u32;
                        if op == "shl" {
                            Expr::Shl(Box::new(a), n)
                        } else {
                            Expr::Shr(Box::new(a), n)
                        }
                    }
                    "slice" => {
                        let a = self.expr()?;
                        let hi = self.uint("slice high bit")? as u32;
                        let lo = self.uint("slice low bit")? as u32;
                        Expr::Slice(Box::new(a), hi, lo)
                    }
                    other => match BinOp::from_keyword(other) {
                        Some(bop) => {
                            let a = self.expr()?;
                            let b = self.expr()?;
                            Expr::bin(bop, a, b)
                        }
                        None => {
                            self.pos -= 1;
                            return Err(self.err(format!("unknown operator `{other}`")));
                        }
                    },
                };
                self.close()?;
                Ok(e)
            }
            Some(Tok::Close) => {
                self.pos -= 1;
                Err(self.err("unexpected `)`"))
            }
            None => Err(self.err("expected expression")),
        }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '[' | ']'))
}

fn parse_uint(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).ok()
    } else if let Some(bin) = s.strip_prefix("0b") {
        u64::from_str_radix(bin, 2).ok()
    } else {
        s.parse().ok()
    }
}

/// Parses a single prefix expression, e.g. `(and a (not b))`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut t = Tokens::new(text, 1);
    let e = t.expr()?;
    t.expect_end()?;
    Ok(e)
}

/// Parses and validates a netlist in the line-based text format.
pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    let mut n = Netlist::default();
    let mut decl_line: HashMap<String, usize> = HashMap::new();
    let mut seen_module = false;
    let mut ended = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let mut t = Tokens::new(raw, lineno);
        if t.at_end() {
            continue;
        }
        if ended {
            return Err(t.err("content after `endmodule`"));
        }
        let kw = t.atom("declaration keyword")?;
        if !seen_module {
            if kw != "module" {
                t.pos -= 1;
                return Err(t.err("expected `module`"));
            }
            n.name = t.ident()?;
            t.expect_end()?;
            seen_module = true;
            continue;
        }
        let mut note = |name: &str| {
            decl_line.entry(name.to_string()).or_insert(lineno);
        };
        match kw {
            "input" | "output" => {
                let name = t.ident()?;
                let width = t.width()?;
                let role = t.role()?;
                note(&name);
                let port = Port { name, width, role };
                if kw == "input" {
                    n.inputs.push(port);
                } else {
                    n.outputs.push(port);
                }
            }
            "reg" => {
                let name = t.ident()?;
                let width = t.width()?;
                t.keyword("init")?;
                let init = if matches!(t.peek(), Some(Tok::Atom("X"))) {
                    t.pos += 1;
                    Init::Uninitialized
                } else {
                    Init::Value(t.uint("init value or `X`")?)
                };
                note(&name);
                n.regs.push(Register { name, width, init });
            }
            "wire" => {
                let name = t.ident()?;
                let width = t.width()?;
                t.keyword("=")?;
                let expr = t.expr()?;
                note(&name);
                n.wires.push(Wire { name, width, expr });
            }
            "next" | "drive" => {
                let name = t.ident()?;
                t.keyword("=")?;
                let expr = t.expr()?;
                let map = if kw == "next" { &mut n.next_fns } else { &mut n.drive_fns };
                if map.contains_key(&name) {
                    return Err(ParseError {
                        line: lineno,
                        col: 1,
                        code: "duplicate-name".into(),
                        message: format!("second `{kw}` for `{name}`"),
                    });
                }
                decl_line.entry(format!("{kw} {name}")).or_insert(lineno);
                map.insert(name, expr);
            }
            "box" => {
                let name = t.ident()?;
                t.keyword("in")?;
                t.open()?;
                let mut inputs = Vec::new();
                while matches!(t.peek(), Some(Tok::Open)) {
                    t.open()?;
                    let pin = t.ident()?;
                    let expr = t.expr()?;
                    let role = t.role()?;
                    t.close()?;
                    note(&format!("{name}.{pin}"));
                    inputs.push(BoxInput { name: pin, expr, role });
                }
                t.close()?;
                t.keyword("out")?;
                t.open()?;
                let mut outputs = Vec::new();
                while matches!(t.peek(), Some(Tok::Open)) {
                    t.open()?;
                    let pin = t.ident()?;
                    let width = t.width()?;
                    let role = t.role()?;
                    t.close()?;
                    note(&format!("{name}.{pin}"));
                    outputs.push(BoxOutput { name: pin, width, role });
                }
                t.close()?;
                note(&name);
                n.boxes.push(BoxDecl { name, inputs, outputs });
            }
            "observe" => {
                let name = t.ident()?;
                n.observations.push(name);
            }
            "endmodule" => ended = true,
            "module" => {
                t.pos -= 1;
                return Err(t.err("nested `module`"));
            }
            other => {
                t.pos -= 1;
                return Err(t.err(format!("unknown declaration `{other}`")));
            }
        }
        t.expect_end()?;
    }
    if !seen_module {
        return Err(ParseError {
            line: 1,
            col: 1,
            code: "syntax".into(),
            message: "empty input, expected `module`".into(),
        });
    }
    if !ended {
        return Err(ParseError {
            line: last_line + 1,
            col: 1,
            code: "syntax".into(),
            message: "missing `endmodule`".into(),
        });
    }

    if let Some(d) = validate(&n).into_iter().next() {
        let line = d
            .subject
            .as_deref()
            .and_then(|s| {
                decl_line
                    .get(s)
                    .or_else(|| decl_line.get(&format!("next {s}")))
                    .or_else(|| decl_line.get(&format!("drive {s}")))
            })
            .copied()
            .unwrap_or(0);
        return Err(ParseError {
            line,
            col: 1,
            code: d.code.to_string(),
            message: d.message,
        });
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_passthrough() {
        let n = parse_netlist("module m\n input c 1 control\n output y 1 control\n drive y = c\nendmodule\n").unwrap();
        assert_eq!(n.inputs.len(), 1);
        assert_eq!(n.outputs.len(), 1);
        assert!(n.regs.is_empty());
    }

    #[test]
    fn mux_width_mismatch_names_node() {
        let src = "module m\n input c 1 control\n input a 8 data\n output y 8 data\n drive y = (mux c (const 4 0) a)\nendmodule";
        let e = parse_netlist(src).unwrap_err();
        assert_eq!(e.code, "width-mismatch");
        assert!(e.message.contains("(mux c (const 4 0) a)"), "{}", e.message);
        assert_eq!(e.line, 5);
    }

    #[test]
    fn syntax_error_reports_column() {
        let e = parse_netlist("module m\n  input c 1 sideways\nendmodule").unwrap_err();
        assert_eq!((e.line, e.col, e.code.as_str()), (2, 13, "syntax"));
    }

    #[test]
    fn duplicate_name_rejected() {
        let e = parse_netlist("module m\n input a 1 data\n input a 1 data\nendmodule").unwrap_err();
        assert_eq!(e.code, "duplicate-name");
    }

    #[test]
    fn comments_and_box_syntax() {
        let src = "module m ; top\n input s 1 control\n input a 4 data\n box mb in ( (x a data) (go s control) ) out ( (p 4 data) (done 1 control) )\n output y 4 data\n output d 1 control\n drive y = mb.p\n drive d = mb.done\nendmodule";
        let n = parse_netlist(src).unwrap();
        assert_eq!(n.boxes[0].inputs.len(), 2);
        assert_eq!(n.width_of("mb.x"), Some(4));
    }

    #[test]
    fn missing_endmodule() {
        assert!(parse_netlist("module m\n input a 1 data\n").is_err());
    }
}
