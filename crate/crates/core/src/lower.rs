//! Type checking and lowering from the AST to [`ProgramIR`].
//!
//! Lowering decomposes every statement into the four canonical pointer
//! assignments plus allocations and calls, introducing per-function
//! temporaries `__tN` for intermediate dereference levels. Struct accesses
//! become per-field locations, array accesses collapse to one monolithic
//! cell per array, and `p = malloc(..)` becomes an allocation named by its
//! source line. Scalar reads/writes through pointers keep their dereference
//! (they are points of interest) but carry no points-to effect.
//!
//! A dereferenced literal address `*(N)` is modeled as a dereference of a
//! synthetic const pointer `__addr_N` bound to a synthetic cell `__mem_N`.

use std::collections::{BTreeSet, HashMap};

use crate::ast::*;
use crate::ir::*;
use crate::parser::parse;
use crate::Error;

/// Parse and lower in one step.
pub fn compile(source: &SourceProgram) -> Result<ProgramIR, Error> {
    let ast = parse(source)?;
    lower(source, &ast)
}

pub fn lower(source: &SourceProgram, ast: &Ast) -> Result<ProgramIR, Error> {
    let mut lw = Lowerer::new(source);
    lw.collect_structs(ast)?;
    lw.collect_funcs(ast)?;
    lw.collect_globals(ast)?;
    let entry = match lw.func_ids.get(source.entry_name.as_str()) {
        Some(f) => *f,
        None => {
            return Err(Error::semantic(
                lw.first_file(),
                Span::new(0, 1, 1),
                format!("entry function `{}` not found", source.entry_name),
            ))
        }
    };
    for (i, f) in ast.funcs.iter().enumerate() {
        lw.lower_func(FuncId(i as u32), f)?;
    }
    let ir = ProgramIR {
        files: source.files.iter().map(|f| f.name.clone()).collect(),
        funcs: lw.funcs,
        vars: lw.vars,
        structs: lw.structs,
        globals: lw.globals,
        entry,
        pcg_edges: lw.pcg_edges,
    };
    debug_assert_eq!(ir.validate(), Ok(()));
    Ok(ir)
}

#[derive(Clone)]
struct FnSig {
    ret: Option<Type>,
    params: Vec<Type>,
}

struct Lowerer<'a> {
    source: &'a SourceProgram,
    structs: Vec<StructDef>,
    struct_ids: HashMap<String, StructId>,
    sigs: Vec<FnSig>,
    func_ids: HashMap<String, FuncId>,
    vars: Vec<VarInfo>,
    globals: Vec<GlobalDecl>,
    global_scope: HashMap<String, VarId>,
    /// literal value -> synthetic const pointer variable
    addr_lits: HashMap<i64, VarId>,
    funcs: Vec<FunctionIR>,
    pcg_edges: BTreeSet<(FuncId, NodeId, FuncId)>,
}

impl<'a> Lowerer<'a> {
    fn new(source: &'a SourceProgram) -> Self {
        Lowerer {
            source,
            structs: Vec::new(),
            struct_ids: HashMap::new(),
            sigs: Vec::new(),
            func_ids: HashMap::new(),
            vars: Vec::new(),
            globals: Vec::new(),
            global_scope: HashMap::new(),
            addr_lits: HashMap::new(),
            funcs: Vec::new(),
            pcg_edges: BTreeSet::new(),
        }
    }

    fn first_file(&self) -> &str {
        self.source.files.first().map(|f| f.name.as_str()).unwrap_or("<input>")
    }

    fn file_of(&self, span: Span) -> &str {
        self.source
            .files
            .get(span.file as usize)
            .map(|f| f.name.as_str())
            .unwrap_or("<input>")
    }

    fn err(&self, span: Span, msg: impl Into<String>) -> Error {
        Error::semantic(self.file_of(span), span, msg)
    }

    fn check_name(&self, name: &str, span: Span) -> Result<(), Error> {
        if name.starts_with("__") {
            return Err(self.err(span, format!("identifier `{name}` uses the reserved `__` prefix")));
        }
        Ok(())
    }

    fn resolve_ty(&self, ty: &TyExpr, span: Span) -> Result<Type, Error> {
        let base = match &ty.base {
            TyName::Int => Base::Int,
            TyName::FnPtr => Base::FnPtr,
            TyName::Void => return Err(self.err(span, "`void` is not a value type")),
            TyName::Struct(name) => match self.struct_ids.get(name.as_str()) {
                Some(sid) => Base::Struct(*sid),
                None => return Err(self.err(span, format!("unknown struct `{name}`"))),
            },
        };
        if ty.array_len.is_some() && base != Base::Int {
            return Err(self.err(span, "arrays must have int or int-pointer elements"));
        }
        Ok(Type { base, ptr: ty.ptr, is_array: ty.array_len.is_some() })
    }

    fn collect_structs(&mut self, ast: &Ast) -> Result<(), Error> {
        for s in &ast.structs {
            self.check_name(&s.name, s.span)?;
            if self.struct_ids.contains_key(&s.name) {
                return Err(self.err(s.span, format!("duplicate struct `{}`", s.name)));
            }
            let sid = StructId(self.structs.len() as u32);
            let fields = s
                .fields
                .iter()
                .map(|(name, ty)| {
                    (name.clone(), Type { base: Base::Int, ptr: ty.ptr, is_array: false })
                })
                .collect();
            self.struct_ids.insert(s.name.clone(), sid);
            self.structs.push(StructDef { name: s.name.clone(), fields });
        }
        Ok(())
    }

    fn collect_funcs(&mut self, ast: &Ast) -> Result<(), Error> {
        for (i, f) in ast.funcs.iter().enumerate() {
            self.check_name(&f.name, f.span)?;
            let ret = match f.ret.base {
                TyName::Void => None,
                _ => Some(self.resolve_ty(&f.ret, f.span)?),
            };
            let params = f
                .params
                .iter()
                .map(|p| self.resolve_ty(&p.ty, p.span))
                .collect::<Result<Vec<_>, _>>()?;
            self.sigs.push(FnSig { ret, params });
            self.func_ids.insert(f.name.clone(), FuncId(i as u32));
        }
        Ok(())
    }

    fn intern_var(&mut self, info: VarInfo) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(info);
        id
    }

    fn collect_globals(&mut self, ast: &Ast) -> Result<(), Error> {
        for g in &ast.globals {
            self.check_name(&g.name, g.span)?;
            if self.global_scope.contains_key(&g.name) || self.func_ids.contains_key(&g.name) {
                return Err(self.err(g.span, format!("duplicate global `{}`", g.name)));
            }
            let ty = self.resolve_ty(&g.ty, g.span)?;
            if g.is_const && !ty.is_pointer() {
                return Err(self.err(g.span, "`const` is only supported on pointer declarations"));
            }
            if g.init.is_some() && (ty.is_array || matches!(ty.base, Base::Struct(_))) {
                return Err(self.err(g.span, "array and struct globals cannot have initializers"));
            }
            let v = self.intern_var(VarInfo {
                name: g.name.clone(),
                owner: None,
                ty,
                is_const: g.is_const,
                is_temp: false,
                formal_of: None,
                has_initializer: g.init.is_some(),
                null_initialized: false,
                span: g.span,
            });
            let init = match &g.init {
                None => {
                    if g.is_const {
                        return Err(self.err(g.span, "const pointer requires an initializer"));
                    }
                    None
                }
                Some(e) => Some(self.global_init(v, ty, e, g.span)?),
            };
            self.global_scope.insert(g.name.clone(), v);
            self.globals.push(GlobalDecl { var: v, init });
        }
        Ok(())
    }

    /// Global initializers are static: an address-of expression or a literal.
    fn global_init(&mut self, _v: VarId, ty: Type, e: &Expr, span: Span) -> Result<GlobalInit, Error> {
        match e {
            Expr::Int(0) if ty.is_pointer() => Ok(GlobalInit::Null),
            Expr::Int(_) if ty.is_pointer() => {
                Err(self.err(span, "pointer initializer must be an address or 0"))
            }
            Expr::Int(_) => Ok(GlobalInit::Scalar),
            Expr::AddrOf(lv) if ty.is_pointer() => {
                let loc = self.static_addr(lv, span)?;
                let depth = self.loc_ptr_depth(loc);
                let expected = self.addr_expected_depth(ty);
                if self.loc_is_func(loc) != (ty.base == Base::FnPtr) || (!self.loc_is_func(loc) && depth != expected) {
                    return Err(self.err(span, "initializer address does not match pointer type"));
                }
                Ok(GlobalInit::AddrOf(loc))
            }
            Expr::Place(LValue::Name(n)) if ty.base == Base::FnPtr => {
                match self.func_ids.get(n.as_str()) {
                    Some(f) => Ok(GlobalInit::AddrOf(MemLoc::Func(*f))),
                    None => Err(self.err(span, format!("unknown function `{n}`"))),
                }
            }
            _ => Err(self.err(span, "global initializer must be an address-of or a literal")),
        }
    }

    fn addr_expected_depth(&self, ty: Type) -> u8 {
        ty.ptr.saturating_sub(1)
    }

    fn loc_is_func(&self, loc: MemLoc) -> bool {
        matches!(loc, MemLoc::Func(_))
    }

    fn loc_ptr_depth(&self, loc: MemLoc) -> u8 {
        match loc {
            MemLoc::Var(v) => self.vars[v.index()].ty.ptr,
            MemLoc::Array(v) => self.vars[v.index()].ty.ptr,
            MemLoc::Field(v, i) => match self.vars[v.index()].ty.base {
                Base::Struct(sid) => self.structs[sid.index()].fields[i as usize].1.ptr,
                _ => 0,
            },
            _ => 0,
        }
    }

    /// Resolve an address-of target in a static (global) context.
    fn static_addr(&mut self, lv: &LValue, span: Span) -> Result<MemLoc, Error> {
        match lv {
            LValue::Name(n) => {
                if let Some(f) = self.func_ids.get(n.as_str()) {
                    return Ok(MemLoc::Func(*f));
                }
                let v = *self
                    .global_scope
                    .get(n.as_str())
                    .ok_or_else(|| self.err(span, format!("unknown identifier `{n}`")))?;
                if self.vars[v.index()].ty.is_array {
                    return Err(self.err(span, "cannot take the address of a whole array"));
                }
                self.check_addressable(v, span)?;
                Ok(MemLoc::Var(v))
            }
            LValue::Field(owner, field) => {
                let v = *self
                    .global_scope
                    .get(owner.as_str())
                    .ok_or_else(|| self.err(span, format!("unknown identifier `{owner}`")))?;
                let (idx, _) = self.field_of(v, field, span)?;
                Ok(MemLoc::Field(v, idx))
            }
            LValue::Index(name, idx) => {
                if !matches!(**idx, Expr::Int(_)) {
                    return Err(self.err(span, "global initializer index must be a literal"));
                }
                let v = *self
                    .global_scope
                    .get(name.as_str())
                    .ok_or_else(|| self.err(span, format!("unknown identifier `{name}`")))?;
                if !self.vars[v.index()].ty.is_array {
                    return Err(self.err(span, format!("`{name}` is not an array")));
                }
                Ok(MemLoc::Array(v))
            }
            LValue::Deref(_) => Err(self.err(span, "cannot take the address of a temporary")),
            LValue::AddrLit(_) => Err(self.err(span, "cannot take the address of a literal")),
        }
    }

    fn check_addressable(&self, v: VarId, span: Span) -> Result<(), Error> {
        if self.vars[v.index()].is_const {
            return Err(self.err(span, "cannot take the address of a const pointer"));
        }
        Ok(())
    }

    fn field_of(&self, owner: VarId, field: &str, span: Span) -> Result<(u16, Type), Error> {
        let sid = match self.vars[owner.index()].ty.base {
            Base::Struct(sid) if !self.vars[owner.index()].ty.is_array => sid,
            _ => {
                return Err(self.err(
                    span,
                    format!("`{}` is not a struct variable", self.vars[owner.index()].name),
                ))
            }
        };
        let def = &self.structs[sid.index()];
        match def.fields.iter().position(|f| f.0 == field) {
            Some(i) => Ok((i as u16, def.fields[i].1)),
            None => Err(self.err(span, format!("struct `{}` has no field `{field}`", def.name))),
        }
    }

    /// The synthetic const pointer modeling dereferences of literal address `n`.
    fn addr_lit_ptr(&mut self, n: i64) -> VarId {
        if let Some(v) = self.addr_lits.get(&n) {
            return *v;
        }
        let span = Span::new(0, 0, 0);
        let cell = self.intern_var(VarInfo {
            name: format!("__mem_{n}"),
            owner: None,
            ty: Type { base: Base::Int, ptr: 0, is_array: false },
            is_const: false,
            is_temp: false,
            formal_of: None,
            has_initializer: false,
            null_initialized: false,
            span,
        });
        let ptr = self.intern_var(VarInfo {
            name: format!("__addr_{n}"),
            owner: None,
            ty: Type { base: Base::Int, ptr: 1, is_array: false },
            is_const: true,
            is_temp: false,
            formal_of: None,
            has_initializer: true,
            null_initialized: false,
            span,
        });
        self.globals.push(GlobalDecl { var: ptr, init: Some(GlobalInit::AddrOf(MemLoc::Var(cell))) });
        self.addr_lits.insert(n, ptr);
        ptr
    }

    fn lower_func(&mut self, fid: FuncId, decl: &FuncDecl) -> Result<(), Error> {
        let sig = self.sigs[fid.index()].clone();
        let mut params = Vec::new();
        let mut scope: HashMap<String, VarId> = HashMap::new();
        for (i, p) in decl.params.iter().enumerate() {
            self.check_name(&p.name, p.span)?;
            if scope.contains_key(&p.name) {
                return Err(self.err(p.span, format!("duplicate parameter `{}`", p.name)));
            }
            let v = self.intern_var(VarInfo {
                name: p.name.clone(),
                owner: Some(fid),
                ty: sig.params[i],
                is_const: false,
                is_temp: false,
                formal_of: Some((fid, i)),
                has_initializer: false,
                null_initialized: false,
                span: p.span,
            });
            scope.insert(p.name.clone(), v);
            params.push(v);
        }
        let ret_slot = match sig.ret {
            Some(t) if t.is_pointer() => Some(self.intern_var(VarInfo {
                name: "__ret".to_string(),
                owner: Some(fid),
                ty: t,
                is_const: false,
                is_temp: true,
                formal_of: None,
                has_initializer: false,
                null_initialized: false,
                span: decl.span,
            })),
            _ => None,
        };

        let mut fb = FnBuilder {
            lw: self,
            fid,
            name: decl.name.clone(),
            ret: sig.ret,
            ret_slot,
            scope,
            params,
            locals: ret_slot.into_iter().collect(),
            nodes: vec![Node::Entry, Node::Exit],
            succs: vec![Vec::new(), Vec::new()],
            preds: vec![Vec::new(), Vec::new()],
            spans: vec![decl.span, decl.span],
            loop_headers: BTreeSet::new(),
            frontier: vec![ENTRY],
            entry_seeds: Vec::new(),
            temp_n: 0,
        };
        fb.lower_body(&decl.body)?;
        let func = fb.finish();
        self.funcs.push(func);
        Ok(())
    }
}

struct FnBuilder<'a, 'b> {
    lw: &'a mut Lowerer<'b>,
    fid: FuncId,
    name: String,
    ret: Option<Type>,
    ret_slot: Option<VarId>,
    scope: HashMap<String, VarId>,
    params: Vec<VarId>,
    locals: Vec<VarId>,
    nodes: Vec<Node>,
    succs: Vec<Vec<NodeId>>,
    preds: Vec<Vec<NodeId>>,
    spans: Vec<Span>,
    loop_headers: BTreeSet<NodeId>,
    /// Nodes whose next outgoing edge targets the next emitted node; empty
    /// when the current point is unreachable.
    frontier: Vec<NodeId>,
    entry_seeds: Vec<MemLoc>,
    temp_n: u32,
}

/// An lvalue resolved down to its final access.
enum PlaceRef {
    /// A named cell: variable, field, or monolithic array element.
    Cell { loc: MemLoc, ty: Type },
    /// One remaining dereference through a pointer key.
    ThroughPtr { ptr: MemLoc, pointee: Type },
}

impl<'a, 'b> FnBuilder<'a, 'b> {
    fn err(&self, span: Span, msg: impl Into<String>) -> Error {
        self.lw.err(span, msg)
    }

    fn link(&mut self, from: NodeId, to: NodeId) {
        self.succs[from.index()].push(to);
        self.preds[to.index()].push(from);
    }

    fn emit(&mut self, node: Node, span: Span) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.succs.push(Vec::new());
        self.preds.push(Vec::new());
        self.spans.push(span);
        for f in std::mem::take(&mut self.frontier) {
            self.link(f, id);
        }
        self.frontier = vec![id];
        id
    }

    fn reachable(&self) -> bool {
        !self.frontier.is_empty()
    }

    fn fresh_temp(&mut self, ty: Type, span: Span) -> MemLoc {
        let name = format!("__t{}", self.temp_n);
        self.temp_n += 1;
        let v = self.lw.intern_var(VarInfo {
            name,
            owner: Some(self.fid),
            ty,
            is_const: false,
            is_temp: true,
            formal_of: None,
            has_initializer: false,
            null_initialized: false,
            span,
        });
        self.locals.push(v);
        MemLoc::Var(v)
    }

    fn lookup(&self, name: &str, span: Span) -> Result<VarId, Error> {
        if let Some(v) = self.scope.get(name) {
            return Ok(*v);
        }
        if let Some(v) = self.lw.global_scope.get(name) {
            return Ok(*v);
        }
        Err(self.err(span, format!("unknown identifier `{name}`")))
    }

    fn var_ty(&self, v: VarId) -> Type {
        self.lw.vars[v.index()].ty
    }

    fn lower_body(&mut self, body: &[Stmt]) -> Result<(), Error> {
        self.lower_stmts(body)?;
        if self.reachable() {
            for f in std::mem::take(&mut self.frontier) {
                self.link(f, EXIT);
            }
        }
        Ok(())
    }

    fn lower_stmts(&mut self, stmts: &[Stmt]) -> Result<(), Error> {
        for s in stmts {
            if !self.reachable() {
                break; // code after return is unreachable; dropped
            }
            self.lower_stmt(s)?;
        }
        Ok(())
    }

    fn lower_stmt(&mut self, stmt: &Stmt) -> Result<(), Error> {
        match stmt {
            Stmt::LocalDecl(d) => self.lower_local_decl(d),
            Stmt::Assign { lhs, rhs, span } => self.lower_assign(lhs, rhs, *span, false),
            Stmt::Call { callee, args, span } => {
                self.lower_call(callee, args, None, *span).map(|_| ())
            }
            Stmt::If { cond, then_body, else_body, span } => {
                self.lower_scalar_expr(cond, *span)?;
                let branch = self.emit(Node::Branch, *span);
                let mut joined = Vec::new();
                self.frontier = vec![branch];
                self.lower_arm(then_body, *span)?;
                joined.append(&mut self.frontier);
                self.frontier = vec![branch];
                self.lower_arm(else_body, *span)?;
                joined.append(&mut self.frontier);
                self.frontier = joined;
                Ok(())
            }
            Stmt::While { cond, body, span } => {
                // Condition markers re-evaluate on every iteration, so the
                // back edge targets the first of them (or the header itself).
                let loop_start = NodeId(self.nodes.len() as u32);
                self.lower_scalar_expr(cond, *span)?;
                let header = self.emit(Node::Branch, *span);
                self.loop_headers.insert(header);
                self.frontier = vec![header];
                self.lower_arm(body, *span)?;
                for f in std::mem::take(&mut self.frontier) {
                    self.link(f, loop_start); // back edge
                }
                self.frontier = vec![header];
                Ok(())
            }
            Stmt::Return { value, span } => {
                self.lower_return(value.as_ref(), *span)?;
                for f in std::mem::take(&mut self.frontier) {
                    self.link(f, EXIT);
                }
                Ok(())
            }
        }
    }

    /// Lowers a branch arm; an empty arm still consumes one successor slot
    /// of the branch node with a no-op.
    fn lower_arm(&mut self, stmts: &[Stmt], span: Span) -> Result<(), Error> {
        if stmts.is_empty() {
            self.emit(Node::Nop, span);
            return Ok(());
        }
        self.lower_stmts(stmts)
    }

    fn lower_local_decl(&mut self, d: &VarDecl) -> Result<(), Error> {
        self.lw.check_name(&d.name, d.span)?;
        if self.scope.contains_key(&d.name) {
            return Err(self.err(d.span, format!("duplicate local `{}`", d.name)));
        }
        let ty = self.lw.resolve_ty(&d.ty, d.span)?;
        if d.is_const && !ty.is_pointer() {
            return Err(self.err(d.span, "`const` is only supported on pointer declarations"));
        }
        if d.is_const && d.init.is_none() {
            return Err(self.err(d.span, "const pointer requires an initializer"));
        }
        if d.init.is_some() && (ty.is_array || matches!(ty.base, Base::Struct(_))) {
            return Err(self.err(d.span, "array and struct locals cannot have initializers"));
        }
        let init_is_null = matches!(d.init, Some(Expr::Int(0))) && ty.is_pointer();
        let v = self.lw.intern_var(VarInfo {
            name: d.name.clone(),
            owner: Some(self.fid),
            ty,
            is_const: d.is_const,
            is_temp: false,
            formal_of: None,
            has_initializer: d.init.is_some() && !init_is_null,
            null_initialized: init_is_null,
            span: d.span,
        });
        self.scope.insert(d.name.clone(), v);
        self.locals.push(v);
        match &d.init {
            Some(e) => self.lower_assign(&LValue::Name(d.name.clone()), e, d.span, true),
            None => {
                // Uninitialized local: every pointer key it owns starts Unknown.
                let mut keys = self.keys_of_var_here(v);
                self.entry_seeds.append(&mut keys);
                Ok(())
            }
        }
    }

    fn keys_of_var_here(&self, v: VarId) -> Vec<MemLoc> {
        let t = self.var_ty(v);
        if t.is_array {
            return if t.ptr > 0 { vec![MemLoc::Array(v)] } else { Vec::new() };
        }
        match t.base {
            Base::Struct(sid) => self.lw.structs[sid.index()]
                .fields
                .iter()
                .enumerate()
                .filter(|(_, f)| f.1.is_pointer())
                .map(|(i, _)| MemLoc::Field(v, i as u16))
                .collect(),
            _ if t.is_pointer() => vec![MemLoc::Var(v)],
            _ => Vec::new(),
        }
    }

    fn lower_place(&mut self, lv: &LValue, span: Span) -> Result<PlaceRef, Error> {
        match lv {
            LValue::Name(n) => {
                let v = self.lookup(n, span)?;
                let ty = self.var_ty(v);
                if ty.is_array {
                    return Err(self.err(span, format!("array `{n}` must be indexed")));
                }
                Ok(PlaceRef::Cell { loc: MemLoc::Var(v), ty })
            }
            LValue::Field(owner, field) => {
                let v = self.lookup(owner, span)?;
                let (idx, fty) = self.lw.field_of(v, field, span)?;
                Ok(PlaceRef::Cell { loc: MemLoc::Field(v, idx), ty: fty })
            }
            LValue::Index(name, idx) => {
                let v = self.lookup(name, span)?;
                let ty = self.var_ty(v);
                if !ty.is_array {
                    return Err(self.err(span, format!("`{name}` is not an array")));
                }
                self.lower_scalar_expr(idx, span)?;
                Ok(PlaceRef::Cell {
                    loc: MemLoc::Array(v),
                    ty: Type { base: ty.base, ptr: ty.ptr, is_array: false },
                })
            }
            LValue::AddrLit(_) => Err(self.err(span, "literal address must be dereferenced")),
            LValue::Deref(inner) => {
                let (ptr, ty) = self.lower_ptr_value(inner, span)?;
                if ty.ptr == 0 {
                    return Err(self.err(span, "cannot dereference a non-pointer"));
                }
                let pointee = match ty.base {
                    Base::FnPtr => {
                        return Err(self.err(span, "function pointers can only be called"))
                    }
                    base => Type { base, ptr: ty.ptr - 1, is_array: false },
                };
                Ok(PlaceRef::ThroughPtr { ptr, pointee })
            }
        }
    }

    /// Evaluates an lvalue to a pointer-valued key, loading intermediate
    /// dereference levels into temporaries.
    fn lower_ptr_value(&mut self, lv: &LValue, span: Span) -> Result<(MemLoc, Type), Error> {
        match lv {
            LValue::AddrLit(n) => {
                let v = self.lw.addr_lit_ptr(*n);
                Ok((MemLoc::Var(v), Type { base: Base::Int, ptr: 1, is_array: false }))
            }
            LValue::Deref(inner) => {
                let (key, ty) = self.lower_ptr_value(inner, span)?;
                if ty.ptr < 2 {
                    return Err(self.err(span, "too many dereferences for pointer level"));
                }
                let loaded = Type { base: ty.base, ptr: ty.ptr - 1, is_array: false };
                let t = self.fresh_temp(loaded, span);
                self.emit(Node::Load { dst: Some(t), src: key }, span);
                Ok((t, loaded))
            }
            other => match self.lower_place(other, span)? {
                PlaceRef::Cell { loc, ty } => {
                    if !ty.is_pointer() {
                        return Err(self.err(span, "cannot dereference a non-pointer"));
                    }
                    Ok((loc, ty))
                }
                PlaceRef::ThroughPtr { .. } => unreachable!("handled by Deref arm"),
            },
        }
    }

    /// Address-of target: `&x`, `&s.f`, `&a[i]`, `&f`.
    fn lower_addr_target(&mut self, lv: &LValue, span: Span) -> Result<(MemLoc, Option<Type>), Error> {
        if let LValue::Name(n) = lv {
            if let Some(f) = self.lw.func_ids.get(n.as_str()) {
                return Ok((MemLoc::Func(*f), None));
            }
            let v = self.lookup(n, span)?;
            let ty = self.var_ty(v);
            if ty.is_array {
                return Err(self.err(span, "cannot take the address of a whole array"));
            }
            self.lw.check_addressable(v, span)?;
            return Ok((MemLoc::Var(v), Some(ty)));
        }
        match lv {
            LValue::Deref(_) => Err(self.err(span, "cannot take the address of a temporary")),
            LValue::AddrLit(_) => Err(self.err(span, "cannot take the address of a literal")),
            _ => match self.lower_place(lv, span)? {
                PlaceRef::Cell { loc, ty } => Ok((loc, Some(ty))),
                PlaceRef::ThroughPtr { .. } => unreachable!(),
            },
        }
    }

    fn lower_assign(&mut self, lhs: &LValue, rhs: &Expr, span: Span, in_decl: bool) -> Result<(), Error> {
        let place = self.lower_place(lhs, span)?;
        match place {
            PlaceRef::Cell { loc, ty } => {
                if !in_decl {
                    if let MemLoc::Var(v) | MemLoc::Array(v) | MemLoc::Field(v, _) = loc {
                        if self.lw.vars[v.index()].is_const {
                            return Err(self.err(
                                span,
                                format!(
                                    "assignment to const pointer `{}`",
                                    self.lw.vars[v.index()].name
                                ),
                            ));
                        }
                    }
                }
                if ty.is_pointer() {
                    self.lower_ptr_rhs_into(loc, ty, rhs, span)
                } else if matches!(ty.base, Base::Struct(_)) {
                    Err(self.err(span, "struct assignment is not supported"))
                } else {
                    self.lower_scalar_rhs(loc, rhs, span)
                }
            }
            PlaceRef::ThroughPtr { ptr, pointee } => {
                if pointee.is_pointer() {
                    let src = self.lower_store_src(pointee, rhs, span)?;
                    self.emit(Node::Store { ptr, src }, span);
                    Ok(())
                } else {
                    // Scalar store through a pointer: dereference happens,
                    // no points-to effect.
                    self.lower_scalar_expr(rhs, span)?;
                    self.emit(Node::Store { ptr, src: StoreSrc::Scalar }, span);
                    Ok(())
                }
            }
        }
    }

    /// RHS of a pointer assignment into a direct cell.
    fn lower_ptr_rhs_into(&mut self, dst: MemLoc, ty: Type, rhs: &Expr, span: Span) -> Result<(), Error> {
        match rhs {
            Expr::Int(0) => {
                self.emit(Node::AddressOf { dst, loc: MemLoc::Null }, span);
                Ok(())
            }
            Expr::Int(_) => Err(self.err(span, "pointer assignment requires an address or 0")),
            Expr::AddrOf(lv) => {
                let (loc, loc_ty) = self.lower_addr_target(lv, span)?;
                self.check_addr_assign(ty, loc, loc_ty, span)?;
                self.emit(Node::AddressOf { dst, loc }, span);
                Ok(())
            }
            Expr::Alloc { size, span: aspan } => {
                if ty.ptr != 1 || ty.base != Base::Int {
                    return Err(self.err(
                        span,
                        "heap cells hold scalars; allocation requires a single-level int pointer",
                    ));
                }
                self.lower_scalar_expr(size, span)?;
                self.emit(Node::Alloc { dst, line: aspan.line }, span);
                Ok(())
            }
            Expr::Call { callee, args, span: cspan } => {
                self.lower_call(callee, args, Some((dst, ty)), *cspan)?;
                Ok(())
            }
            Expr::Place(lv) => {
                // Function name decays to its address for fn-pointer targets.
                if let LValue::Name(n) = lv {
                    if let Some(f) = self.lw.func_ids.get(n.as_str()).copied() {
                        if ty.base != Base::FnPtr {
                            return Err(self.err(span, "function address requires a function pointer"));
                        }
                        self.emit(Node::AddressOf { dst, loc: MemLoc::Func(f) }, span);
                        return Ok(());
                    }
                }
                match self.lower_place(lv, span)? {
                    PlaceRef::Cell { loc, ty: src_ty } => {
                        if src_ty != ty {
                            return Err(self.err(span, "pointer levels do not match in copy"));
                        }
                        self.emit(Node::Copy { dst, src: loc }, span);
                        Ok(())
                    }
                    PlaceRef::ThroughPtr { ptr, pointee } => {
                        if pointee != ty {
                            return Err(self.err(span, "pointer levels do not match in load"));
                        }
                        self.emit(Node::Load { dst: Some(dst), src: ptr }, span);
                        Ok(())
                    }
                }
            }
            Expr::Unary(..) | Expr::Binary(..) => {
                Err(self.err(span, "arithmetic is not defined on pointers"))
            }
        }
    }

    /// RHS of a store `*p = rhs` where the pointee is a pointer: must end up
    /// atomic (key or null), via a temporary when needed.
    fn lower_store_src(&mut self, pointee: Type, rhs: &Expr, span: Span) -> Result<StoreSrc, Error> {
        match rhs {
            Expr::Int(0) => Ok(StoreSrc::Null),
            Expr::Place(lv) => {
                if let LValue::Name(n) = lv {
                    if self.lw.func_ids.contains_key(n.as_str()) {
                        return Err(self.err(span, "cannot store a function address through a pointer"));
                    }
                }
                match self.lower_place(lv, span)? {
                    PlaceRef::Cell { loc, ty } => {
                        if ty != pointee {
                            return Err(self.err(span, "pointer levels do not match in store"));
                        }
                        Ok(StoreSrc::Key(loc))
                    }
                    PlaceRef::ThroughPtr { ptr, pointee: loaded } => {
                        if loaded != pointee {
                            return Err(self.err(span, "pointer levels do not match in store"));
                        }
                        let t = self.fresh_temp(loaded, span);
                        self.emit(Node::Load { dst: Some(t), src: ptr }, span);
                        Ok(StoreSrc::Key(t))
                    }
                }
            }
            // &x, malloc, calls: land in a temporary first.
            Expr::AddrOf(_) | Expr::Alloc { .. } | Expr::Call { .. } => {
                let t = self.fresh_temp(pointee, span);
                self.lower_ptr_rhs_into(t, pointee, rhs, span)?;
                Ok(StoreSrc::Key(t))
            }
            _ => Err(self.err(span, "pointer store requires an address-valued expression")),
        }
    }

    fn check_addr_assign(&self, dst_ty: Type, loc: MemLoc, loc_ty: Option<Type>, span: Span) -> Result<(), Error> {
        match loc {
            MemLoc::Func(_) => {
                if dst_ty.base != Base::FnPtr {
                    return Err(self.err(span, "function address requires a function pointer"));
                }
                Ok(())
            }
            _ => {
                let lt = loc_ty.expect("non-function address target carries a type");
                if dst_ty.base == Base::FnPtr {
                    return Err(self.err(span, "function pointer must be assigned a function address"));
                }
                if lt.ptr + 1 != dst_ty.ptr {
                    return Err(self.err(span, "pointer levels do not match in address-of"));
                }
                Ok(())
            }
        }
    }

    /// Scalar assignment: lower dereference markers on both sides; the write
    /// itself carries no points-to information.
    fn lower_scalar_rhs(&mut self, _dst: MemLoc, rhs: &Expr, span: Span) -> Result<(), Error> {
        if let Expr::Call { callee, args, span: cspan } = rhs {
            self.lower_call(callee, args, None, *cspan)?;
            return Ok(());
        }
        self.lower_scalar_expr(rhs, span)?;
        self.emit(Node::Nop, span);
        Ok(())
    }

    /// Walks a scalar expression emitting a `Load` marker for every pointer
    /// dereference level it performs.
    fn lower_scalar_expr(&mut self, e: &Expr, span: Span) -> Result<(), Error> {
        match e {
            Expr::Int(_) => Ok(()),
            Expr::Unary(_, inner) => self.lower_scalar_expr(inner, span),
            Expr::Binary(_, a, b) => {
                self.lower_scalar_expr(a, span)?;
                self.lower_scalar_expr(b, span)
            }
            Expr::AddrOf(_) => Err(self.err(span, "address expression in scalar context")),
            Expr::Alloc { .. } => Err(self.err(span, "heap allocation in scalar context")),
            Expr::Call { .. } => {
                Err(self.err(span, "calls may only appear as statements or assignment right-hand sides"))
            }
            Expr::Place(lv) => match self.lower_place(lv, span)? {
                PlaceRef::Cell { ty, loc } => {
                    if ty.is_pointer() {
                        let name = self.lw.vars[match loc {
                            MemLoc::Var(v) | MemLoc::Array(v) | MemLoc::Field(v, _) => v.index(),
                            _ => unreachable!(),
                        }]
                        .name
                        .clone();
                        return Err(self.err(span, format!("pointer `{name}` used in scalar context")));
                    }
                    Ok(())
                }
                PlaceRef::ThroughPtr { ptr, pointee } => {
                    if pointee.is_pointer() {
                        return Err(self.err(span, "pointer value used in scalar context"));
                    }
                    self.emit(Node::Load { dst: None, src: ptr }, span);
                    Ok(())
                }
            },
        }
    }

    fn lower_return(&mut self, value: Option<&Expr>, span: Span) -> Result<(), Error> {
        match (self.ret, value) {
            (None, None) => Ok(()),
            (None, Some(_)) => Err(self.err(span, "void function cannot return a value")),
            (Some(_), None) => Err(self.err(span, format!("function `{}` must return a value", self.name))),
            (Some(t), Some(e)) => {
                if t.is_pointer() {
                    let slot = MemLoc::Var(self.ret_slot.expect("pointer return has a slot"));
                    self.lower_ptr_rhs_into(slot, t, e, span)
                } else {
                    if let Expr::Call { callee, args, span: cspan } = e {
                        self.lower_call(callee, args, None, *cspan)?;
                        return Ok(());
                    }
                    self.lower_scalar_expr(e, span)
                }
            }
        }
    }

    fn lower_call(
        &mut self,
        callee: &str,
        args: &[Expr],
        ret_into: Option<(MemLoc, Type)>,
        span: Span,
    ) -> Result<NodeId, Error> {
        // Direct call to a named function, or indirect through a pointer.
        if let Some(fid) = self.lw.func_ids.get(callee).copied() {
            let sig = self.lw.sigs[fid.index()].clone();
            if sig.params.len() != args.len() {
                return Err(self.err(
                    span,
                    format!("`{callee}` expects {} arguments, got {}", sig.params.len(), args.len()),
                ));
            }
            let mut actuals = Vec::new();
            for (a, pty) in args.iter().zip(sig.params.iter()) {
                actuals.push(self.lower_actual(a, Some(*pty), span)?);
            }
            if let Some((dst, ty)) = ret_into {
                match sig.ret {
                    Some(rt) if rt == ty => {}
                    _ => return Err(self.err(span, format!("`{callee}` does not return this type"))),
                }
                let n = self.emit(
                    Node::Call { callee: Callee::Direct(fid), args: actuals, ret_to: Some(dst) },
                    span,
                );
                self.lw.pcg_edges.insert((self.fid, n, fid));
                return Ok(n);
            }
            let n = self.emit(Node::Call { callee: Callee::Direct(fid), args: actuals, ret_to: None }, span);
            self.lw.pcg_edges.insert((self.fid, n, fid));
            return Ok(n);
        }

        let v = self.lookup(callee, span)?;
        let ty = self.var_ty(v);
        if ty.base != Base::FnPtr || !ty.is_pointer() {
            return Err(self.err(span, format!("`{callee}` is not callable")));
        }
        let mut actuals = Vec::new();
        for a in args {
            actuals.push(self.lower_actual(a, None, span)?);
        }
        let ret_to = ret_into.map(|(dst, _)| dst);
        Ok(self.emit(
            Node::Call { callee: Callee::Indirect(MemLoc::Var(v)), args: actuals, ret_to },
            span,
        ))
    }

    /// Lower an actual argument to atomic form. `expected` is the formal's
    /// type for direct calls; indirect calls bind by position later.
    fn lower_actual(&mut self, a: &Expr, expected: Option<Type>, span: Span) -> Result<Actual, Error> {
        match a {
            // A literal 0 binds as null to pointer formals; for indirect
            // calls the engines decide once targets are known.
            Expr::Int(0) if expected.is_none_or(|t| t.is_pointer()) => Ok(Actual::Null),
            Expr::Int(_) => {
                if expected.is_some_and(|t| t.is_pointer()) {
                    return Err(self.err(span, "pointer argument requires an address or 0"));
                }
                Ok(Actual::Scalar)
            }
            Expr::AddrOf(lv) => {
                let (loc, loc_ty) = self.lower_addr_target(lv, span)?;
                if let Some(t) = expected {
                    if !t.is_pointer() {
                        return Err(self.err(span, "scalar parameter cannot take an address"));
                    }
                    self.check_addr_assign(t, loc, loc_ty, span)?;
                }
                Ok(Actual::AddrOf(loc))
            }
            Expr::Place(lv) => match self.lower_place(lv, span)? {
                PlaceRef::Cell { loc, ty } => {
                    if ty.is_pointer() {
                        if let Some(t) = expected {
                            if t != ty {
                                return Err(self.err(span, "argument pointer level mismatch"));
                            }
                        }
                        Ok(Actual::Key(loc))
                    } else {
                        if expected.is_some_and(|t| t.is_pointer()) {
                            return Err(self.err(span, "pointer argument requires an address"));
                        }
                        Ok(Actual::Scalar)
                    }
                }
                PlaceRef::ThroughPtr { ptr, pointee } => {
                    if pointee.is_pointer() {
                        if let Some(t) = expected {
                            if t != pointee {
                                return Err(self.err(span, "argument pointer level mismatch"));
                            }
                        }
                        let t = self.fresh_temp(pointee, span);
                        self.emit(Node::Load { dst: Some(t), src: ptr }, span);
                        Ok(Actual::Key(t))
                    } else {
                        if expected.is_some_and(|t| t.is_pointer()) {
                            return Err(self.err(span, "pointer argument requires an address"));
                        }
                        self.emit(Node::Load { dst: None, src: ptr }, span);
                        Ok(Actual::Scalar)
                    }
                }
            },
            Expr::Alloc { .. } => {
                let ty = expected.unwrap_or(Type { base: Base::Int, ptr: 1, is_array: false });
                if !ty.is_pointer() {
                    return Err(self.err(span, "heap allocation passed to scalar parameter"));
                }
                let t = self.fresh_temp(ty, span);
                self.lower_ptr_rhs_into(t, ty, a, span)?;
                Ok(Actual::Key(t))
            }
            Expr::Call { .. } => {
                Err(self.err(span, "calls may only appear as statements or assignment right-hand sides"))
            }
            Expr::Unary(..) | Expr::Binary(..) => {
                if expected.is_some_and(|t| t.is_pointer()) {
                    return Err(self.err(span, "pointer argument requires an address"));
                }
                self.lower_scalar_expr(a, span)?;
                Ok(Actual::Scalar)
            }
        }
    }

    fn finish(self) -> FunctionIR {
        FunctionIR {
            id: self.fid,
            name: self.name,
            params: self.params,
            ret: self.ret,
            ret_slot: self.ret_slot,
            locals: self.locals,
            nodes: self.nodes,
            succs: self.succs,
            preds: self.preds,
            spans: self.spans,
            loop_headers: self.loop_headers,
            entry_seeds: self.entry_seeds,
        }
    }
}
