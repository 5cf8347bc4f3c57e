//! Canonical printer. Output re-parses to the same normalized tree.

use std::fmt::{self, Write};

use super::Expr;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Level {
    Sum,
    Term,
    Atom,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(&mut s, self, Level::Sum);
        f.write_str(&s)
    }
}

fn write_number(out: &mut String, v: f64) {
    if v.is_sign_negative() {
        let _ = write!(out, "(-{:?})", -v);
    } else {
        let _ = write!(out, "{v:?}");
    }
}

fn is_atom(e: &Expr) -> bool {
    match e {
        Expr::Const(v) => !v.is_sign_negative(),
        Expr::Var | Expr::Param(_) | Expr::Exp(_) | Expr::Sin(_) | Expr::Cos(_) => true,
        _ => false,
    }
}

fn write_expr(out: &mut String, e: &Expr, level: Level) {
    match e {
        Expr::Const(v) => write_number(out, *v),
        Expr::Var => out.push('x'),
        Expr::Param(p) => out.push_str(p),
        Expr::Sum(ts) => {
            let paren = level > Level::Sum;
            if paren {
                out.push('(');
            }
            for (i, t) in ts.iter().enumerate() {
                match t {
                    Expr::Neg(inner) => {
                        out.push('-');
                        write_expr(out, inner, Level::Term);
                    }
                    other => {
                        if i > 0 {
                            out.push('+');
                        }
                        write_expr(out, other, Level::Term);
                    }
                }
            }
            if paren {
                out.push(')');
            }
        }
        Expr::Product(fs) => {
            let paren = level > Level::Term;
            if paren {
                out.push('(');
            }
            for (i, f) in fs.iter().enumerate() {
                if i > 0 {
                    if let Expr::Pow(base, exp) = f {
                        if exp.as_const() == Some(-1.0) {
                            out.push('/');
                            write_factor(out, base);
                            continue;
                        }
                    }
                    out.push('*');
                }
                write_factor(out, f);
            }
            if paren {
                out.push(')');
            }
        }
        Expr::Pow(base, exp) => {
            write_atom(out, base);
            out.push('^');
            write_atom(out, exp);
        }
        Expr::Exp(a) => write_call(out, "exp", a),
        Expr::Sin(a) => write_call(out, "sin", a),
        Expr::Cos(a) => write_call(out, "cos", a),
        Expr::Neg(a) => {
            let paren = level > Level::Sum;
            if paren {
                out.push('(');
            }
            out.push('-');
            write_expr(out, a, Level::Term);
            if paren {
                out.push(')');
            }
        }
    }
}

/// Something that may stand on either side of `*` or after `/`.
fn write_factor(out: &mut String, e: &Expr) {
    match e {
        Expr::Pow(..) => write_expr(out, e, Level::Atom),
        _ => write_atom(out, e),
    }
}

fn write_atom(out: &mut String, e: &Expr) {
    if is_atom(e) || matches!(e, Expr::Const(_)) {
        write_expr(out, e, Level::Atom);
    } else {
        out.push('(');
        write_expr(out, e, Level::Sum);
        out.push(')');
    }
}

fn write_call(out: &mut String, name: &str, arg: &Expr) {
    out.push_str(name);
    out.push('(');
    write_expr(out, arg, Level::Sum);
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::super::parse;

    #[test]
    fn canonical_forms() {
        for (src, printed) in [
            ("x^2", "x^2.0"),
            ("a*exp(c*x)+b*exp(-c*x)", "a*exp(c*x)+b*exp(-c*x)"),
            ("x/a", "x/a"),
            ("x - 2", "x+(-2.0)"),
            ("-(x+1)", "-(x+1.0)"),
            ("x^(-2)", "x^(-2.0)"),
        ] {
            assert_eq!(parse(src).unwrap().to_string(), printed, "{src}");
        }
    }

    #[test]
    fn reparse_is_stable() {
        for src in [
            "a*sin(k*x)+b*cos(k*x)",
            "(a*exp(c*x)+b*exp(-c*x))^(-2)*c3 + 0.25*(alpha+c^2)^2",
            "-lambda/c*(a*exp(c*x)-b*exp(-c*x)) + c1",
            "x^(-(c1+E)/w)*exp(-w*x/2)",
            "-(x*y)^0.5/(1+x^2)",
            "2*-x",
        ] {
            let Ok(once) = parse(src) else { continue };
            let twice = parse(&once.to_string()).unwrap();
            assert_eq!(once, twice, "{src} -> {once}");
        }
    }
}
