//! Recursive-descent parser for the subset language.
//!
//! Declarations must precede statements inside a function body. `if` and
//! `while` bodies are brace-delimited blocks. Calls appear either as
//! standalone statements or as the entire right-hand side of an assignment.

use crate::ast::*;
use crate::lexer::{lex, TokKind, Token};
use crate::Error;

pub fn parse(source: &SourceProgram) -> Result<Ast, Error> {
    let mut ast = Ast::default();
    for (idx, file) in source.files.iter().enumerate() {
        let toks = lex(idx as u32, &file.name, &file.text)?;
        let mut p = Parser { file: &file.name, toks, pos: 0 };
        p.parse_file(&mut ast)?;
    }
    for (i, f) in ast.funcs.iter().enumerate() {
        if ast.funcs[..i].iter().any(|g| g.name == f.name) {
            return Err(Error::syntax(
                file_name_of(source, f.span),
                f.span,
                format!("duplicate function definition `{}`", f.name),
            ));
        }
    }
    Ok(ast)
}

fn file_name_of(source: &SourceProgram, span: Span) -> &str {
    source
        .files
        .get(span.file as usize)
        .map(|f| f.name.as_str())
        .unwrap_or("<input>")
}

struct Parser<'a> {
    file: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &TokKind {
        &self.toks[self.pos].kind
    }

    fn peek_at(&self, off: usize) -> &TokKind {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].kind
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> TokKind {
        let k = self.toks[self.pos].kind.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        k
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::syntax(self.file, self.span(), msg)
    }

    fn eat_punct(&mut self, p: &str) -> Result<(), Error> {
        match self.peek() {
            TokKind::Punct(q) if *q == p => {
                self.bump();
                Ok(())
            }
            other => Err(self.err(format!("expected `{p}`, found {}", show(other)))),
        }
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), TokKind::Punct(q) if *q == p)
    }

    fn at_kw(&self, k: &str) -> bool {
        matches!(self.peek(), TokKind::Kw(q) if *q == k)
    }

    fn eat_kw(&mut self, k: &str) -> Result<(), Error> {
        if self.at_kw(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected `{k}`, found {}", show(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, Error> {
        match self.peek().clone() {
            TokKind::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => Err(self.err(format!("expected identifier, found {}", show(&other)))),
        }
    }

    fn parse_file(&mut self, ast: &mut Ast) -> Result<(), Error> {
        while !matches!(self.peek(), TokKind::Eof) {
            if self.at_kw("struct") && matches!(self.peek_at(2), TokKind::Punct("{")) {
                ast.structs.push(self.struct_decl()?);
                continue;
            }
            // `type name (` introduces a function definition; anything else
            // at top level is a global declaration.
            if self.starts_function() {
                ast.funcs.push(self.func_decl()?);
            } else {
                ast.globals.push(self.var_decl()?);
            }
        }
        Ok(())
    }

    /// Lookahead: `[const] base '*'* IDENT '('` means a function follows.
    fn starts_function(&mut self) -> bool {
        let mut off = 0;
        if matches!(self.peek_at(off), TokKind::Kw("const")) {
            off += 1;
        }
        match self.peek_at(off) {
            TokKind::Kw("int") | TokKind::Kw("void") => off += 1,
            TokKind::Kw("struct") => off += 2,
            _ => return false,
        }
        while matches!(self.peek_at(off), TokKind::Punct("*")) {
            off += 1;
        }
        matches!(self.peek_at(off), TokKind::Ident(_))
            && matches!(self.peek_at(off + 1), TokKind::Punct("("))
    }

    fn struct_decl(&mut self) -> Result<StructDecl, Error> {
        let span = self.span();
        self.eat_kw("struct")?;
        let name = self.ident()?;
        self.eat_punct("{")?;
        let mut fields = Vec::new();
        while !self.at_punct("}") {
            self.eat_kw("int")?;
            let mut ptr = 0u8;
            while self.at_punct("*") {
                self.bump();
                ptr += 1;
            }
            let fname = self.ident()?;
            self.eat_punct(";")?;
            fields.push((fname, TyExpr { base: TyName::Int, ptr, array_len: None }));
        }
        self.eat_punct("}")?;
        self.eat_punct(";")?;
        Ok(StructDecl { name, fields, span })
    }

    /// Parses `[const] base '*'* name ['[' N ']'] ['=' expr] ';'`, plus the
    /// function-pointer form `int (*name)(...)`.
    fn var_decl(&mut self) -> Result<VarDecl, Error> {
        let span = self.span();
        let mut is_const = false;
        if self.at_kw("const") {
            self.bump();
            is_const = true;
        }
        let base = if self.at_kw("struct") {
            self.bump();
            TyName::Struct(self.ident()?)
        } else if self.at_kw("int") {
            self.bump();
            TyName::Int
        } else {
            return Err(self.err("expected type"));
        };

        // Function-pointer declarator: int ( * name ) ( ... )
        if base == TyName::Int && self.at_punct("(") {
            self.bump();
            self.eat_punct("*")?;
            let name = self.ident()?;
            self.eat_punct(")")?;
            self.eat_punct("(")?;
            if self.at_punct("...") {
                self.bump();
            }
            self.eat_punct(")")?;
            let init = if self.at_punct("=") {
                self.bump();
                Some(self.expr()?)
            } else {
                None
            };
            self.eat_punct(";")?;
            return Ok(VarDecl {
                name,
                ty: TyExpr { base: TyName::FnPtr, ptr: 1, array_len: None },
                is_const,
                init,
                span,
            });
        }

        let mut ptr = 0u8;
        while self.at_punct("*") {
            self.bump();
            ptr += 1;
        }
        let name = self.ident()?;
        let array_len = if self.at_punct("[") {
            self.bump();
            let n = match self.bump() {
                TokKind::Int(n) if n > 0 => n as u32,
                _ => return Err(self.err("expected positive array length")),
            };
            self.eat_punct("]")?;
            Some(n)
        } else {
            None
        };
        let init = if self.at_punct("=") {
            self.bump();
            Some(self.expr()?)
        } else {
            None
        };
        self.eat_punct(";")?;
        Ok(VarDecl { name, ty: TyExpr { base, ptr, array_len }, is_const, init, span })
    }

    fn func_decl(&mut self) -> Result<FuncDecl, Error> {
        let span = self.span();
        let base = if self.at_kw("void") {
            self.bump();
            TyName::Void
        } else if self.at_kw("int") {
            self.bump();
            TyName::Int
        } else {
            return Err(self.err("expected return type"));
        };
        let mut ptr = 0u8;
        while self.at_punct("*") {
            self.bump();
            ptr += 1;
        }
        let name = self.ident()?;
        self.eat_punct("(")?;
        let mut params = Vec::new();
        if self.at_kw("void") && matches!(self.peek_at(1), TokKind::Punct(")")) {
            self.bump();
        }
        while !self.at_punct(")") {
            if !params.is_empty() {
                self.eat_punct(",")?;
            }
            let pspan = self.span();
            self.eat_kw("int")?;
            let mut pptr = 0u8;
            while self.at_punct("*") {
                self.bump();
                pptr += 1;
            }
            let pname = self.ident()?;
            params.push(VarDecl {
                name: pname,
                ty: TyExpr { base: TyName::Int, ptr: pptr, array_len: None },
                is_const: false,
                init: None,
                span: pspan,
            });
        }
        self.eat_punct(")")?;
        let body = self.block(true)?;
        Ok(FuncDecl { name, ret: TyExpr { base, ptr, array_len: None }, params, body, span })
    }

    fn block(&mut self, allow_decls: bool) -> Result<Vec<Stmt>, Error> {
        self.eat_punct("{")?;
        let mut stmts = Vec::new();
        let mut decls_done = false;
        while !self.at_punct("}") {
            if self.starts_decl() {
                if !allow_decls || decls_done {
                    return Err(self.err("declarations must precede statements in a function body"));
                }
                stmts.push(Stmt::LocalDecl(self.var_decl()?));
            } else {
                decls_done = true;
                stmts.push(self.stmt()?);
            }
        }
        self.eat_punct("}")?;
        Ok(stmts)
    }

    fn starts_decl(&self) -> bool {
        self.at_kw("const") || self.at_kw("int") || self.at_kw("struct")
    }

    fn stmt(&mut self) -> Result<Stmt, Error> {
        let span = self.span();
        if self.at_kw("if") {
            self.bump();
            self.eat_punct("(")?;
            let cond = self.expr()?;
            self.eat_punct(")")?;
            let then_body = self.block(false)?;
            let else_body = if self.at_kw("else") {
                self.bump();
                self.block(false)?
            } else {
                Vec::new()
            };
            return Ok(Stmt::If { cond, then_body, else_body, span });
        }
        if self.at_kw("while") {
            self.bump();
            self.eat_punct("(")?;
            let cond = self.expr()?;
            self.eat_punct(")")?;
            let body = self.block(false)?;
            return Ok(Stmt::While { cond, body, span });
        }
        if self.at_kw("return") {
            self.bump();
            let value = if self.at_punct(";") { None } else { Some(self.expr()?) };
            self.eat_punct(";")?;
            return Ok(Stmt::Return { value, span });
        }
        // Call statement: IDENT '(' ... ')' ';'
        if matches!(self.peek(), TokKind::Ident(_)) && matches!(self.peek_at(1), TokKind::Punct("("))
        {
            let callee = self.ident()?;
            let args = self.call_args()?;
            self.eat_punct(";")?;
            return Ok(Stmt::Call { callee, args, span });
        }
        // Assignment: lvalue '=' expr ';'
        let lhs_expr = self.unary()?;
        let lhs = expr_to_lvalue(lhs_expr).ok_or_else(|| self.err("expected assignable place"))?;
        self.eat_punct("=")?;
        let rhs = self.expr()?;
        self.eat_punct(";")?;
        Ok(Stmt::Assign { lhs, rhs, span })
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, Error> {
        self.eat_punct("(")?;
        let mut args = Vec::new();
        while !self.at_punct(")") {
            if !args.is_empty() {
                self.eat_punct(",")?;
            }
            args.push(self.expr()?);
        }
        self.eat_punct(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> Result<Expr, Error> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.and_expr()?;
        while self.at_punct("||") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.cmp_expr()?;
        while self.at_punct("&&") {
            self.bump();
            let rhs = self.cmp_expr()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.add_expr()?;
        loop {
            let op = match self.peek() {
                TokKind::Punct("==") => BinOp::Eq,
                TokKind::Punct("!=") => BinOp::Ne,
                TokKind::Punct("<") => BinOp::Lt,
                TokKind::Punct("<=") => BinOp::Le,
                TokKind::Punct(">") => BinOp::Gt,
                TokKind::Punct(">=") => BinOp::Ge,
                _ => break,
            };
            self.bump();
            let rhs = self.add_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                TokKind::Punct("+") => BinOp::Add,
                TokKind::Punct("-") => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, Error> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                TokKind::Punct("*") => BinOp::Mul,
                TokKind::Punct("/") => BinOp::Div,
                TokKind::Punct("%") => BinOp::Rem,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, Error> {
        if self.at_punct("*") {
            self.bump();
            let inner = self.unary()?;
            return match expr_to_lvalue_or_addr(inner) {
                Some(lv) => Ok(Expr::Place(LValue::Deref(Box::new(lv)))),
                None => Err(self.err("`*` must be applied to a place or literal address")),
            };
        }
        if self.at_punct("&") {
            self.bump();
            let inner = self.unary()?;
            return match expr_to_lvalue(inner) {
                Some(lv) => Ok(Expr::AddrOf(lv)),
                None => Err(self.err("`&` must be applied to a variable, field, or array element")),
            };
        }
        if self.at_punct("!") {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(inner)));
        }
        if self.at_punct("-") {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, Error> {
        let span = self.span();
        match self.peek().clone() {
            TokKind::Int(n) => {
                self.bump();
                Ok(Expr::Int(n))
            }
            TokKind::Kw("malloc" | "calloc" | "alloc") => {
                self.bump();
                let mut args = self.call_args()?;
                if args.len() != 1 {
                    return Err(self.err("heap allocation takes exactly one size argument"));
                }
                Ok(Expr::Alloc { size: Box::new(args.remove(0)), span })
            }
            TokKind::Ident(name) => {
                self.bump();
                if self.at_punct("(") {
                    let args = self.call_args()?;
                    return Ok(Expr::Call { callee: name, args, span });
                }
                if self.at_punct("[") {
                    self.bump();
                    let idx = self.expr()?;
                    self.eat_punct("]")?;
                    return Ok(Expr::Place(LValue::Index(name, Box::new(idx))));
                }
                if self.at_punct(".") {
                    self.bump();
                    let field = self.ident()?;
                    return Ok(Expr::Place(LValue::Field(name, field)));
                }
                Ok(Expr::Place(LValue::Name(name)))
            }
            TokKind::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.eat_punct(")")?;
                Ok(e)
            }
            other => Err(self.err(format!("expected expression, found {}", show(&other)))),
        }
    }
}

fn expr_to_lvalue(e: Expr) -> Option<LValue> {
    match e {
        Expr::Place(lv) => Some(lv),
        _ => None,
    }
}

/// Like [`expr_to_lvalue`] but also accepts an integer literal, so that
/// `*(1234)` parses as a dereference of a hard-coded address.
fn expr_to_lvalue_or_addr(e: Expr) -> Option<LValue> {
    match e {
        Expr::Place(lv) => Some(lv),
        Expr::Int(n) => Some(LValue::AddrLit(n)),
        _ => None,
    }
}

fn show(k: &TokKind) -> String {
    match k {
        TokKind::Ident(s) => format!("identifier `{s}`"),
        TokKind::Int(n) => format!("integer `{n}`"),
        TokKind::Kw(s) => format!("`{s}`"),
        TokKind::Punct(s) => format!("`{s}`"),
        TokKind::Eof => "end of input".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(text: &str) -> Result<Ast, Error> {
        parse(&SourceProgram::single("t.mc", text))
    }

    #[test]
    fn p2_text_has_one_function_two_statements() {
        let ast = parse_one("int a; void main(){ int *p = &a; *p = 1; }").unwrap();
        assert_eq!(ast.funcs.len(), 1);
        assert_eq!(ast.funcs[0].body.len(), 2);
        assert_eq!(ast.globals.len(), 1);
    }

    #[test]
    fn empty_file_gives_empty_ast() {
        let ast = parse_one("").unwrap();
        assert!(ast.funcs.is_empty() && ast.globals.is_empty() && ast.structs.is_empty());
    }

    #[test]
    fn malformed_initializer_is_a_syntax_error() {
        let err = parse_one("int *p = ;").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t.mc:1:"), "{msg}");
    }

    #[test]
    fn duplicate_function_rejected() {
        let err = parse_one("void f(){} void f(){}").unwrap_err();
        assert!(err.to_string().contains("duplicate function"));
    }

    #[test]
    fn parses_struct_array_fnptr_and_const() {
        let ast = parse_one(
            "struct S { int a; int *f; };\n\
             struct S s;\n\
             int arr[4];\n\
             int (*fp)(...);\n\
             const int *cp = &g;\n\
             int g;\n\
             void main(){ }",
        )
        .unwrap();
        assert_eq!(ast.structs.len(), 1);
        assert_eq!(ast.globals.len(), 5);
        assert_eq!(ast.globals[1].ty.array_len, Some(4));
        assert_eq!(ast.globals[2].ty.base, TyName::FnPtr);
        assert!(ast.globals[3].is_const);
        assert_eq!(ast.globals[3].ty.ptr, 1);
    }

    #[test]
    fn parses_multilevel_store() {
        let ast = parse_one("void main(){ int **q; int *r; **q = r; }").unwrap();
        match &ast.funcs[0].body[2] {
            Stmt::Assign { lhs, .. } => match lhs {
                LValue::Deref(inner) => assert!(matches!(**inner, LValue::Deref(_))),
                other => panic!("expected deref lvalue, got {other:?}"),
            },
            other => panic!("expected assignment, got {other:?}"),
        }
    }

    #[test]
    fn parses_literal_address_deref() {
        let ast = parse_one("void main(){ *(4660) = 1; }").unwrap();
        match &ast.funcs[0].body[0] {
            Stmt::Assign { lhs: LValue::Deref(inner), .. } => {
                assert_eq!(**inner, LValue::AddrLit(4660));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_declaration_after_statement() {
        assert!(parse_one("void main(){ int x; x = 1; int y; }").is_err());
    }
}
