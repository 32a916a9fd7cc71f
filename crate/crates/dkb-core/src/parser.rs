//! The textual formats: knowledge bases with action blocks, query
//! strings, path files, and plain ABox files.
//!
//! Documents are line-oriented UTF-8. `#` starts a comment, blank lines
//! are skipped. A document consists of a `[tbox]` section, an `[abox]`
//! section, and any number of `[action] <name>` blocks:
//!
//! ```text
//! [tbox]
//! Technician <= Employee
//! Employee <= not Product
//! exists P- <= A
//! funct P
//!
//! [abox]
//! Technician(t1)
//! Product(p1)
//!
//! [action] create
//! guard: Employee(x)
//! new: y
//! add: Product(y)
//! ```
//!
//! Variables start with a lowercase letter; a leading `_` marks a guard
//! variable as existentially quantified. Individuals are quoted or start
//! with a lowercase letter. The bare token `_` is reserved for rewriting
//! output and rejected in user input. Inverse-role facts `P-(a,b)` are
//! normalized to `P(b,a)` while parsing.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    ABox, ABoxAssertion, BasicConcept, Diagnostic, Individual, KnowledgeBase, Name, RoleExpr,
    SourceSpan, TBoxAssertion,
};
use crate::actions::Action;
use crate::query::{Binding, ConjunctiveQuery, QueryAtom, Term, UnionQuery};

/// A parsed document: the knowledge base plus its action set.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct DkbDocument {
    pub kb: KnowledgeBase,
    pub actions: Vec<Action>,
}

pub type ParseResult<T> = Result<T, Vec<Diagnostic>>;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Quoted(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Leq,
    Minus,
    Colon,
    Amp,
    Pipe,
    EqEq,
    Neq,
    Eq,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    span: SourceSpan,
}

fn err(msg: impl Into<String>, span: SourceSpan) -> Diagnostic {
    Diagnostic::error(msg, Some(span))
}

fn tokenize_line(line: &str, line_no: usize, diags: &mut Vec<Diagnostic>) -> Vec<Spanned> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let span = SourceSpan { line: line_no, column: col };
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
            }
            '(' => {
                out.push(Spanned { tok: Tok::LParen, span });
                i += 1;
            }
            ')' => {
                out.push(Spanned { tok: Tok::RParen, span });
                i += 1;
            }
            '[' => {
                out.push(Spanned { tok: Tok::LBracket, span });
                i += 1;
            }
            ']' => {
                out.push(Spanned { tok: Tok::RBracket, span });
                i += 1;
            }
            ',' => {
                out.push(Spanned { tok: Tok::Comma, span });
                i += 1;
            }
            ':' => {
                out.push(Spanned { tok: Tok::Colon, span });
                i += 1;
            }
            '&' => {
                out.push(Spanned { tok: Tok::Amp, span });
                i += 1;
            }
            '|' => {
                out.push(Spanned { tok: Tok::Pipe, span });
                i += 1;
            }
            '-' => {
                out.push(Spanned { tok: Tok::Minus, span });
                i += 1;
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::Leq, span });
                    i += 2;
                } else {
                    diags.push(err("expected `<=`", span));
                    i += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::Neq, span });
                    i += 2;
                } else {
                    diags.push(err("expected `!=`", span));
                    i += 1;
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    out.push(Spanned { tok: Tok::EqEq, span });
                    i += 2;
                } else {
                    out.push(Spanned { tok: Tok::Eq, span });
                    i += 1;
                }
            }
            '"' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j == chars.len() {
                    diags.push(err("unterminated string literal", span));
                    i = j;
                } else {
                    let text: String = chars[start..j].iter().collect();
                    out.push(Spanned { tok: Tok::Quoted(text), span });
                    i = j + 1;
                }
            }
            c if c.is_alphanumeric() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[start..j].iter().collect();
                out.push(Spanned { tok: Tok::Ident(text), span });
                i = j;
            }
            other => {
                diags.push(err(format!("unexpected character `{}`", other), span));
                i += 1;
            }
        }
    }
    out
}

/// Cursor over one line of tokens.
struct Cursor {
    toks: Vec<Spanned>,
    pos: usize,
    line_span: SourceSpan,
}

impl Cursor {
    fn new(toks: Vec<Spanned>, line_no: usize) -> Self {
        Cursor { toks, pos: 0, line_span: SourceSpan { line: line_no, column: 1 } }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn span(&self) -> SourceSpan {
        self.toks.get(self.pos).map(|s| s.span).unwrap_or(self.line_span)
    }

    fn next(&mut self) -> Option<Spanned> {
        let item = self.toks.get(self.pos).cloned();
        if item.is_some() {
            self.pos += 1;
        }
        item
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, SourceSpan), Diagnostic> {
        let span = self.span();
        match self.next() {
            Some(Spanned { tok: Tok::Ident(name), span }) => Ok((name, span)),
            _ => Err(err(format!("expected {}", what), span)),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<SourceSpan, Diagnostic> {
        let span = self.span();
        if self.eat(&tok) {
            Ok(span)
        } else {
            Err(err(format!("expected {}", what), span))
        }
    }

    fn expect_end(&mut self) -> Result<(), Diagnostic> {
        if self.at_end() {
            Ok(())
        } else {
            Err(err("unexpected trailing input", self.span()))
        }
    }
}

/// A concept or role reference before kinds are resolved.
#[derive(Clone, Debug)]
enum RawSide {
    Plain(String, SourceSpan),
    Inverted(String, SourceSpan),
    Exists(String, bool, SourceSpan),
}

#[derive(Clone, Debug)]
enum RawTBoxLine {
    Inclusion { lhs: RawSide, rhs: RawSide, negated: bool },
    Funct { role: String, inverted: bool, span: SourceSpan },
}

#[derive(Clone, Debug)]
struct RawAtom {
    pred: String,
    pred_inverted: bool,
    args: Vec<(ArgToken, SourceSpan)>,
    span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum ArgToken {
    Word(String),
    Quoted(String),
}

fn parse_side(cur: &mut Cursor) -> Result<RawSide, Diagnostic> {
    let (name, span) = cur.expect_ident("a concept, role, or `exists`")?;
    if name == "exists" {
        let (role, rspan) = cur.expect_ident("a role name after `exists`")?;
        let inverted = cur.eat(&Tok::Minus);
        check_predicate_name(&role, rspan)?;
        Ok(RawSide::Exists(role, inverted, span))
    } else {
        check_predicate_name(&name, span)?;
        if cur.eat(&Tok::Minus) {
            Ok(RawSide::Inverted(name, span))
        } else {
            Ok(RawSide::Plain(name, span))
        }
    }
}

fn check_predicate_name(name: &str, span: SourceSpan) -> Result<(), Diagnostic> {
    if name == "_" || name == "not" || name == "exists" || name == "funct" {
        return Err(err(format!("`{}` cannot be used as a name here", name), span));
    }
    Ok(())
}

fn parse_raw_atom(cur: &mut Cursor) -> Result<RawAtom, Diagnostic> {
    let (pred, span) = cur.expect_ident("a predicate name")?;
    check_predicate_name(&pred, span)?;
    let pred_inverted = cur.eat(&Tok::Minus);
    cur.expect(Tok::LParen, "`(` after predicate name")?;
    let mut args = Vec::new();
    loop {
        let aspan = cur.span();
        match cur.next() {
            Some(Spanned { tok: Tok::Ident(word), span }) => args.push((ArgToken::Word(word), span)),
            Some(Spanned { tok: Tok::Quoted(text), span }) => {
                args.push((ArgToken::Quoted(text), span))
            }
            _ => return Err(err("expected an argument", aspan)),
        }
        if cur.eat(&Tok::Comma) {
            continue;
        }
        cur.expect(Tok::RParen, "`)` closing the argument list")?;
        break;
    }
    Ok(RawAtom { pred, pred_inverted, args, span })
}

#[derive(Clone, Debug)]
struct RawAction {
    name: String,
    name_span: SourceSpan,
    guard: Vec<RawAtom>,
    fresh: Vec<(String, SourceSpan)>,
    add: Vec<RawAtom>,
    del: Vec<RawAtom>,
}

#[derive(Default)]
struct Evidence {
    roles: BTreeMap<String, SourceSpan>,
    concepts: BTreeMap<String, SourceSpan>,
}

impl Evidence {
    fn role(&mut self, name: &str, span: SourceSpan) {
        self.roles.entry(name.to_string()).or_insert(span);
    }

    fn concept(&mut self, name: &str, span: SourceSpan) {
        self.concepts.entry(name.to_string()).or_insert(span);
    }

    fn note_atom(&mut self, atom: &RawAtom) {
        if atom.args.len() >= 2 || atom.pred_inverted {
            self.role(&atom.pred, atom.span);
        } else {
            self.concept(&atom.pred, atom.span);
        }
    }
}

/// Parses a document. On failure returns every diagnostic gathered, each
/// carrying a position.
pub fn parse_dkb(text: &str) -> ParseResult<DkbDocument> {
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut tbox_lines: Vec<RawTBoxLine> = Vec::new();
    let mut abox_atoms: Vec<RawAtom> = Vec::new();
    let mut raw_actions: Vec<RawAction> = Vec::new();

    #[derive(PartialEq)]
    enum Section {
        Preamble,
        TBox,
        ABox,
        Action(usize),
    }
    let mut section = Section::Preamble;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokenize_line(line, line_no, &mut diags);
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(toks, line_no);
        if cur.peek() == Some(&Tok::LBracket) {
            cur.next();
            let header = match cur.expect_ident("a section name") {
                Ok((name, span)) => Some((name, span)),
                Err(d) => {
                    diags.push(d);
                    None
                }
            };
            let Some((name, span)) = header else { continue };
            if let Err(d) = cur.expect(Tok::RBracket, "`]`") {
                diags.push(d);
                continue;
            }
            match name.as_str() {
                "tbox" => {
                    section = Section::TBox;
                    if let Err(d) = cur.expect_end() {
                        diags.push(d);
                    }
                }
                "abox" => {
                    section = Section::ABox;
                    if let Err(d) = cur.expect_end() {
                        diags.push(d);
                    }
                }
                "action" => match cur.expect_ident("an action name") {
                    Ok((action_name, nspan)) => {
                        if let Err(d) = cur.expect_end() {
                            diags.push(d);
                        }
                        raw_actions.push(RawAction {
                            name: action_name,
                            name_span: nspan,
                            guard: Vec::new(),
                            fresh: Vec::new(),
                            add: Vec::new(),
                            del: Vec::new(),
                        });
                        section = Section::Action(raw_actions.len() - 1);
                    }
                    Err(d) => diags.push(d),
                },
                other => diags.push(err(format!("unknown section `[{}]`", other), span)),
            }
            continue;
        }

        match section {
            Section::Preamble => {
                diags.push(err("content before the first section header", cur.span()));
            }
            Section::TBox => match parse_tbox_line(&mut cur) {
                Ok(parsed) => tbox_lines.push(parsed),
                Err(d) => diags.push(d),
            },
            Section::ABox => match parse_raw_atom(&mut cur).and_then(|a| {
                cur.expect_end()?;
                Ok(a)
            }) {
                Ok(atom) => abox_atoms.push(atom),
                Err(d) => diags.push(d),
            },
            Section::Action(i) => {
                if let Err(d) = parse_action_line(&mut cur, &mut raw_actions[i]) {
                    diags.push(d);
                }
            }
        }
    }

    // Kind resolution: names carry role evidence when used with two
    // arguments, a `-` suffix, `exists`, or `funct`; concept evidence when
    // used with one argument or as an atomic side of a mixed inclusion.
    let mut evidence = Evidence::default();
    for line in &tbox_lines {
        match line {
            RawTBoxLine::Funct { role, span, .. } => {
                evidence.role(role, *span);
            }
            RawTBoxLine::Inclusion { lhs, rhs, .. } => {
                let mixed = matches!(lhs, RawSide::Exists(..)) || matches!(rhs, RawSide::Exists(..));
                for side in [lhs, rhs] {
                    match side {
                        RawSide::Exists(name, _, span) | RawSide::Inverted(name, span) => {
                            evidence.role(name, *span)
                        }
                        RawSide::Plain(name, span) if mixed => evidence.concept(name, *span),
                        RawSide::Plain(..) => {}
                    }
                }
            }
        }
    }
    for atom in &abox_atoms {
        evidence.note_atom(atom);
    }
    for action in &raw_actions {
        for atom in action.guard.iter().chain(action.add.iter()).chain(action.del.iter()) {
            evidence.note_atom(atom);
        }
    }
    // Plain-plain inclusions become role inclusions when either side is
    // already known to be a role; resolving one can unlock another.
    loop {
        let mut changed = false;
        for line in &tbox_lines {
            if let RawTBoxLine::Inclusion { lhs: RawSide::Plain(l, ls), rhs: RawSide::Plain(r, rs), .. } = line
            {
                let role_l = evidence.roles.contains_key(l);
                let role_r = evidence.roles.contains_key(r);
                if role_l && !role_r {
                    evidence.role(r, *rs);
                    changed = true;
                } else if role_r && !role_l {
                    evidence.role(l, *ls);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (name, span) in &evidence.roles {
        if let Some(cspan) = evidence.concepts.get(name) {
            diags.push(err(
                format!(
                    "`{}` is used both as a role and as a concept (concept use at {})",
                    name, cspan
                ),
                *span,
            ));
        }
    }

    let mut tbox: Vec<TBoxAssertion> = Vec::new();
    for line in &tbox_lines {
        match resolve_tbox_line(line, &evidence) {
            Ok(assertion) => tbox.push(assertion),
            Err(d) => diags.push(d),
        }
    }

    let mut abox: ABox = ABox::new();
    for atom in &abox_atoms {
        match resolve_fact(atom) {
            Ok(fact) => {
                abox.insert(fact);
            }
            Err(d) => diags.push(d),
        }
    }

    let mut actions: Vec<Action> = Vec::new();
    let mut seen_names: BTreeSet<String> = BTreeSet::new();
    for raw in &raw_actions {
        if !seen_names.insert(raw.name.clone()) {
            diags.push(err(format!("duplicate action name `{}`", raw.name), raw.name_span));
            continue;
        }
        match resolve_action(raw) {
            Ok(action) => actions.push(action),
            Err(mut ds) => diags.append(&mut ds),
        }
    }

    if diags.iter().any(|d| d.severity == crate::model::Severity::Error) {
        return Err(diags);
    }
    Ok(DkbDocument { kb: KnowledgeBase::new(tbox, abox), actions })
}

fn parse_tbox_line(cur: &mut Cursor) -> Result<RawTBoxLine, Diagnostic> {
    if let Some(Tok::Ident(word)) = cur.peek() {
        if word == "funct" {
            cur.next();
            let (role, span) = cur.expect_ident("a role name after `funct`")?;
            check_predicate_name(&role, span)?;
            let inverted = cur.eat(&Tok::Minus);
            cur.expect_end()?;
            return Ok(RawTBoxLine::Funct { role, inverted, span });
        }
        if word == "not" {
            return Err(err(
                "negation is only allowed on the right-hand side of an inclusion",
                cur.span(),
            ));
        }
    }
    let lhs = parse_side(cur)?;
    cur.expect(Tok::Leq, "`<=`")?;
    let negated = match cur.peek() {
        Some(Tok::Ident(word)) if word == "not" => {
            cur.next();
            true
        }
        _ => false,
    };
    let rhs = parse_side(cur)?;
    cur.expect_end()?;
    Ok(RawTBoxLine::Inclusion { lhs, rhs, negated })
}

fn parse_action_line(cur: &mut Cursor, action: &mut RawAction) -> Result<(), Diagnostic> {
    let (key, kspan) = cur.expect_ident("`guard:`, `new:`, `add:` or `del:`")?;
    cur.expect(Tok::Colon, "`:` after the key")?;
    match key.as_str() {
        "guard" | "add" | "del" => {
            let mut atoms = Vec::new();
            if !cur.at_end() {
                loop {
                    atoms.push(parse_raw_atom(cur)?);
                    if cur.eat(&Tok::Comma) || cur.eat(&Tok::Amp) {
                        continue;
                    }
                    break;
                }
            }
            cur.expect_end()?;
            let target = match key.as_str() {
                "guard" => &mut action.guard,
                "add" => &mut action.add,
                _ => &mut action.del,
            };
            if !target.is_empty() {
                return Err(err(format!("duplicate `{}:` line", key), kspan));
            }
            *target = atoms;
            Ok(())
        }
        "new" => {
            let mut vars = Vec::new();
            if !cur.at_end() {
                loop {
                    let (name, span) = cur.expect_ident("a variable name")?;
                    if name == "_" || name.starts_with('_') {
                        return Err(err(
                            "fresh variables must be plain lowercase identifiers",
                            span,
                        ));
                    }
                    vars.push((name, span));
                    if cur.eat(&Tok::Comma) {
                        continue;
                    }
                    break;
                }
            }
            cur.expect_end()?;
            if !action.fresh.is_empty() {
                return Err(err("duplicate `new:` line", kspan));
            }
            action.fresh = vars;
            Ok(())
        }
        other => Err(err(format!("unknown action key `{}:`", other), kspan)),
    }
}

fn resolve_tbox_line(line: &RawTBoxLine, evidence: &Evidence) -> Result<TBoxAssertion, Diagnostic> {
    match line {
        RawTBoxLine::Funct { role, inverted, .. } => {
            let role = RoleExpr { name: Name::from(role.as_str()), inverted: *inverted };
            Ok(TBoxAssertion::Functionality(role))
        }
        RawTBoxLine::Inclusion { lhs, rhs, negated } => {
            let role_line = role_side(lhs, evidence) || role_side(rhs, evidence);
            if role_line {
                let lhs = to_role(lhs)?;
                let rhs = to_role(rhs)?;
                Ok(TBoxAssertion::RoleInclusion { lhs, rhs, negated_rhs: *negated })
            } else {
                let lhs = to_concept(lhs)?;
                let rhs = to_concept(rhs)?;
                Ok(TBoxAssertion::ConceptInclusion { lhs, rhs, negated_rhs: *negated })
            }
        }
    }
}

fn role_side(side: &RawSide, evidence: &Evidence) -> bool {
    match side {
        RawSide::Inverted(..) => true,
        RawSide::Exists(..) => false,
        RawSide::Plain(name, _) => evidence.roles.contains_key(name),
    }
}

fn to_role(side: &RawSide) -> Result<RoleExpr, Diagnostic> {
    match side {
        RawSide::Plain(name, _) => Ok(RoleExpr::direct(name.as_str())),
        RawSide::Inverted(name, _) => Ok(RoleExpr::inverse_of(name.as_str())),
        RawSide::Exists(_, _, span) => Err(err(
            "`exists` cannot appear in a role inclusion; use a concept inclusion",
            *span,
        )),
    }
}

fn to_concept(side: &RawSide) -> Result<BasicConcept, Diagnostic> {
    match side {
        RawSide::Plain(name, _) => Ok(BasicConcept::atomic(name.as_str())),
        RawSide::Exists(name, inverted, _) => Ok(BasicConcept::Exists(RoleExpr {
            name: Name::from(name.as_str()),
            inverted: *inverted,
        })),
        RawSide::Inverted(_, span) =>

            Err(err("an inverted role cannot stand alone as a concept", *span)),
    }
}

fn individual_from_arg(arg: &ArgToken, span: SourceSpan) -> Result<Individual, Diagnostic> {
    match arg {
        ArgToken::Quoted(text) => Ok(Individual::from(text.as_str())),
        ArgToken::Word(word) => {
            if word == "_" {
                Err(err("`_` is reserved and cannot name an individual", span))
            } else if word.chars().next().is_some_and(|c| c.is_lowercase()) {
                Ok(Individual::from(word.as_str()))
            } else {
                Err(err(
                    format!("individual `{}` must start lowercase or be quoted", word),
                    span,
                ))
            }
        }
    }
}

fn resolve_fact(atom: &RawAtom) -> Result<ABoxAssertion, Diagnostic> {
    match atom.args.len() {
        1 => {
            if atom.pred_inverted {
                return Err(err("a concept assertion cannot be inverted", atom.span));
            }
            let ind = individual_from_arg(&atom.args[0].0, atom.args[0].1)?;
            Ok(ABoxAssertion::Concept(Name::from(atom.pred.as_str()), ind))
        }
        2 => {
            let first = individual_from_arg(&atom.args[0].0, atom.args[0].1)?;
            let second = individual_from_arg(&atom.args[1].0, atom.args[1].1)?;
            let role = RoleExpr { name: Name::from(atom.pred.as_str()), inverted: atom.pred_inverted };
            Ok(ABoxAssertion::role_normalized(&role, first, second))
        }
        n => Err(err(format!("expected 1 or 2 arguments, found {}", n), atom.span)),
    }
}

/// Variable occurrences of an atom, each flagged existential or not.
type AtomVars = Vec<(Name, bool)>;

/// A guard or effect atom: arguments are variables only.
fn resolve_var_atom(atom: &RawAtom) -> Result<(QueryAtom, AtomVars), Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut vars: Vec<(Name, bool)> = Vec::new();
    let mut terms: Vec<Term> = Vec::new();
    for (arg, span) in &atom.args {
        match arg {
            ArgToken::Quoted(_) => {
                diags.push(err("guards and effects use variables, not individuals", *span));
            }
            ArgToken::Word(word) => {
                if word == "_" {
                    diags.push(err("the bare `_` is reserved for rewriting output", *span));
                } else if !word.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') {
                    diags.push(err(format!("variable `{}` must start lowercase", word), *span));
                } else {
                    let existential = word.starts_with('_');
                    let name = Name::from(word.as_str());
                    vars.push((name.clone(), existential));
                    terms.push(Term::Var(name));
                }
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    if atom.pred_inverted && atom.args.len() != 2 {
        return Err(vec![err("only role atoms can be inverted", atom.span)]);
    }
    let qatom = match terms.len() {
        1 => QueryAtom::concept(atom.pred.as_str(), terms[0].clone()),
        2 => {
            // Inverse-role atoms normalize to direct atoms here as well.
            if atom.pred_inverted {
                QueryAtom::role(atom.pred.as_str(), terms[1].clone(), terms[0].clone())
            } else {
                QueryAtom::role(atom.pred.as_str(), terms[0].clone(), terms[1].clone())
            }
        }
        n => return Err(vec![err(format!("expected 1 or 2 arguments, found {}", n), atom.span)]),
    };
    Ok((qatom, vars))
}

fn resolve_action(raw: &RawAction) -> Result<Action, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut guard_atoms = Vec::new();
    let mut free_vars: Vec<Name> = Vec::new();
    let mut exist_vars: BTreeSet<Name> = BTreeSet::new();
    for atom in &raw.guard {
        match resolve_var_atom(atom) {
            Ok((qatom, vars)) => {
                for (name, existential) in vars {
                    if existential {
                        exist_vars.insert(name);
                    } else if !free_vars.contains(&name) {
                        free_vars.push(name);
                    }
                }
                guard_atoms.push(qatom);
            }
            Err(mut ds) => diags.append(&mut ds),
        }
    }

    let mut fresh_vars: Vec<Name> = Vec::new();
    for (name, span) in &raw.fresh {
        let name = Name::from(name.as_str());
        if free_vars.contains(&name) || exist_vars.contains(&name) {
            diags.push(err(
                format!("fresh variable {} must not appear in the guard", name),
                *span,
            ));
        } else if fresh_vars.contains(&name) {
            diags.push(err(format!("duplicate fresh variable {}", name), *span));
        } else {
            fresh_vars.push(name);
        }
    }

    let mut resolve_effects = |raws: &[RawAtom], deletion: bool| -> Vec<QueryAtom> {
        let mut out: Vec<QueryAtom> = Vec::new();
        for atom in raws {
            match resolve_var_atom(atom) {
                Ok((qatom, vars)) => {
                    for (name, _) in &vars {
                        let is_free = free_vars.contains(name);
                        let is_fresh = fresh_vars.contains(name);
                        if deletion && !is_free {
                            diags.push(err(
                                format!(
                                    "delete effects may only use free guard variables, found {}",
                                    name
                                ),
                                atom.span,
                            ));
                        } else if !deletion && !is_free && !is_fresh {
                            diags.push(err(
                                format!(
                                    "add effects may only use free guard variables or fresh ones, found {}",
                                    name
                                ),
                                atom.span,
                            ));
                        }
                    }
                    if !out.contains(&qatom) {
                        out.push(qatom);
                    }
                }
                Err(mut ds) => diags.append(&mut ds),
            }
        }
        out
    };
    let add_effects = resolve_effects(&raw.add, false);
    let del_effects = resolve_effects(&raw.del, true);

    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(Action {
        name: Name::from(raw.name.as_str()),
        guard: ConjunctiveQuery { atoms: guard_atoms, free_vars, exist_vars },
        fresh_vars,
        add_effects,
        del_effects,
    })
}

/// Serializes a document in the same grammar; parsing the output yields a
/// structurally equal document.
pub fn serialize_dkb(doc: &DkbDocument) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("[tbox]\n");
    for axiom in &doc.kb.tbox {
        let _ = writeln!(out, "{}", axiom);
    }
    out.push_str("[abox]\n");
    for fact in &doc.kb.abox {
        let _ = writeln!(out, "{}", render_fact(fact));
    }
    for action in &doc.actions {
        let _ = writeln!(out, "[action] {}", action.name);
        let guard: Vec<String> = action.guard.atoms.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "guard: {}", guard.join(", "));
        if !action.fresh_vars.is_empty() {
            let fresh: Vec<String> =
                action.fresh_vars.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "new: {}", fresh.join(", "));
        }
        if !action.add_effects.is_empty() {
            let add: Vec<String> = action.add_effects.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "add: {}", add.join(", "));
        }
        if !action.del_effects.is_empty() {
            let del: Vec<String> = action.del_effects.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "del: {}", del.join(", "));
        }
    }
    out
}

fn render_individual(ind: &Individual) -> String {
    let name = ind.name().as_str();
    let plain = name.chars().next().is_some_and(|c| c.is_lowercase())
        && name.chars().all(|c| c.is_alphanumeric() || c == '_')
        && name != "_";
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name)
    }
}

fn render_fact(fact: &ABoxAssertion) -> String {
    match fact {
        ABoxAssertion::Concept(name, ind) => format!("{}({})", name, render_individual(ind)),
        ABoxAssertion::Role(name, a, b) => {
            format!("{}({}, {})", name, render_individual(a), render_individual(b))
        }
    }
}

/// Parses an ABox file: fact lines, optionally under an `[abox]` header.
pub fn parse_abox(text: &str) -> ParseResult<ABox> {
    let mut diags = Vec::new();
    let mut abox = ABox::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokenize_line(line, line_no, &mut diags);
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(toks, line_no);
        if cur.peek() == Some(&Tok::LBracket) {
            cur.next();
            match cur.expect_ident("a section name") {
                Ok((name, _)) if name == "abox" => {
                    if let Err(d) = cur.expect(Tok::RBracket, "`]`") {
                        diags.push(d);
                    }
                }
                Ok((name, span)) => {
                    diags.push(err(format!("unexpected section `[{}]` in an ABox file", name), span))
                }
                Err(d) => diags.push(d),
            }
            continue;
        }
        match parse_raw_atom(&mut cur).and_then(|a| {
            cur.expect_end()?;
            Ok(a)
        }) {
            Ok(atom) => match resolve_fact(&atom) {
                Ok(fact) => {
                    abox.insert(fact);
                }
                Err(d) => diags.push(d),
            },
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(abox)
    } else {
        Err(diags)
    }
}

/// One step of a path file: an action name and its variable binding.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PathLabel {
    pub action: Name,
    pub binding: Binding,
    pub span: SourceSpan,
}

/// Parses a path file: `step: <action> with x=a, y=b` lines in order.
/// Unknown action names are left for the checker.
pub fn parse_path(text: &str) -> ParseResult<Vec<PathLabel>> {
    let mut diags = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokenize_line(line, line_no, &mut diags);
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(toks, line_no);
        let parsed = (|| -> Result<PathLabel, Diagnostic> {
            let (step, sspan) = cur.expect_ident("`step`")?;
            if step != "step" {
                return Err(err("path lines start with `step:`", sspan));
            }
            cur.expect(Tok::Colon, "`:` after `step`")?;
            let (action, aspan) = cur.expect_ident("an action name")?;
            let mut binding = Binding::new();
            if !cur.at_end() {
                let (with, wspan) = cur.expect_ident("`with`")?;
                if with != "with" {
                    return Err(err("expected `with` before the bindings", wspan));
                }
                loop {
                    let (var, vspan) = cur.expect_ident("a variable name")?;
                    if var == "_" {
                        return Err(err("`_` cannot be bound", vspan));
                    }
                    cur.expect(Tok::Eq, "`=`")?;
                    let ispan = cur.span();
                    let ind = match cur.next() {
                        Some(Spanned { tok: Tok::Ident(word), span }) => {
                            individual_from_arg(&ArgToken::Word(word), span)?
                        }
                        Some(Spanned { tok: Tok::Quoted(text), span }) => {
                            individual_from_arg(&ArgToken::Quoted(text), span)?
                        }
                        _ => return Err(err("expected an individual", ispan)),
                    };
                    binding.bind(Name::from(var.as_str()), ind);
                    if cur.eat(&Tok::Comma) {
                        continue;
                    }
                    break;
                }
            }
            cur.expect_end()?;
            Ok(PathLabel { action: Name::from(action.as_str()), binding, span: aspan })
        })();
        match parsed {
            Ok(label) => labels.push(label),
            Err(d) => diags.push(d),
        }
    }
    if diags.is_empty() {
        Ok(labels)
    } else {
        Err(diags)
    }
}

/// Parses a query string: conjuncts joined by `&`, disjuncts by `|`.
/// A lowercase argument names an individual when it occurs in
/// `individuals` (or is quoted); otherwise it is a variable, existential
/// when prefixed with `_`. All disjuncts must agree on the free variables.
pub fn parse_query(text: &str, individuals: &BTreeSet<Individual>) -> ParseResult<UnionQuery> {
    let mut diags = Vec::new();
    let toks = tokenize_line(text, 1, &mut diags);
    if !diags.is_empty() {
        return Err(diags);
    }
    // Split on `|` at the top level (no nesting in this grammar).
    let mut groups: Vec<Vec<Spanned>> = vec![Vec::new()];
    for tok in toks {
        if tok.tok == Tok::Pipe {
            groups.push(Vec::new());
        } else {
            groups.last_mut().unwrap().push(tok);
        }
    }
    let mut disjuncts = Vec::new();
    let mut shared_free: Option<Vec<Name>> = None;
    for group in groups {
        if group.is_empty() {
            return Err(vec![Diagnostic::error("empty disjunct", None)]);
        }
        let mut cur = Cursor::new(group, 1);
        match parse_query_conjunct(&mut cur, individuals) {
            Ok(cq) => {
                match &shared_free {
                    None => shared_free = Some(cq.free_vars.clone()),
                    Some(free) => {
                        let a: BTreeSet<_> = free.iter().collect();
                        let b: BTreeSet<_> = cq.free_vars.iter().collect();
                        if a != b {
                            return Err(vec![Diagnostic::error(
                                "all disjuncts must use the same free variables",
                                None,
                            )]);
                        }
                    }
                }
                disjuncts.push(cq);
            }
            Err(d) => return Err(vec![d]),
        }
    }
    // Align the free-variable order across disjuncts.
    if let Some(free) = shared_free {
        for cq in &mut disjuncts {
            cq.free_vars = free.clone();
        }
    }
    Ok(UnionQuery::Union(disjuncts))
}

fn parse_query_term(
    cur: &mut Cursor,
    individuals: &BTreeSet<Individual>,
    free: &mut Vec<Name>,
    exist: &mut BTreeSet<Name>,
) -> Result<Term, Diagnostic> {
    let span = cur.span();
    match cur.next() {
        Some(Spanned { tok: Tok::Quoted(text), .. }) => Ok(Term::constant(text.as_str())),
        Some(Spanned { tok: Tok::Ident(word), span }) => {
            if word == "_" {
                return Err(err("the bare `_` is reserved; name the variable", span));
            }
            if !word.chars().next().is_some_and(|c| c.is_lowercase() || c == '_') {
                return Err(err(format!("`{}` must start lowercase or be quoted", word), span));
            }
            if individuals.contains(&Individual::from(word.as_str())) && !word.starts_with('_') {
                return Ok(Term::constant(word.as_str()));
            }
            let name = Name::from(word.as_str());
            if word.starts_with('_') {
                exist.insert(name.clone());
            } else if !free.contains(&name) {
                free.push(name.clone());
            }
            Ok(Term::Var(name))
        }
        _ => Err(err("expected a term", span)),
    }
}

fn parse_query_conjunct(
    cur: &mut Cursor,
    individuals: &BTreeSet<Individual>,
) -> Result<ConjunctiveQuery, Diagnostic> {
    let mut atoms = Vec::new();
    let mut free: Vec<Name> = Vec::new();
    let mut exist: BTreeSet<Name> = BTreeSet::new();
    loop {
        // Either `Pred(terms)` or `term (==|!=) term`.
        let is_atom = matches!(
            (cur.peek(), cur.toks.get(cur.pos + 1).map(|s| &s.tok)),
            (Some(Tok::Ident(_)), Some(Tok::LParen)) | (Some(Tok::Ident(_)), Some(Tok::Minus))
        );
        if is_atom {
            let (pred, pspan) = cur.expect_ident("a predicate")?;
            check_predicate_name(&pred, pspan)?;
            let inverted = cur.eat(&Tok::Minus);
            cur.expect(Tok::LParen, "`(`")?;
            let first = parse_query_term(cur, individuals, &mut free, &mut exist)?;
            if cur.eat(&Tok::Comma) {
                let second = parse_query_term(cur, individuals, &mut free, &mut exist)?;
                cur.expect(Tok::RParen, "`)`")?;
                let atom = if inverted {
                    QueryAtom::role(pred.as_str(), second, first)
                } else {
                    QueryAtom::role(pred.as_str(), first, second)
                };
                atoms.push(atom);
            } else {
                cur.expect(Tok::RParen, "`)`")?;
                if inverted {
                    return Err(err("only role atoms can be inverted", pspan));
                }
                atoms.push(QueryAtom::concept(pred.as_str(), first));
            }
        } else {
            let lhs = parse_query_term(cur, individuals, &mut free, &mut exist)?;
            let span = cur.span();
            let op = cur.next();
            let rhs = parse_query_term(cur, individuals, &mut free, &mut exist)?;
            match op.map(|s| s.tok) {
                Some(Tok::EqEq) => atoms.push(QueryAtom::Eq(lhs, rhs)),
                Some(Tok::Neq) => atoms.push(QueryAtom::Neq(lhs, rhs)),
                _ => return Err(err("expected `==` or `!=`", span)),
            }
        }
        if cur.eat(&Tok::Amp) {
            continue;
        }
        break;
    }
    cur.expect_end()?;
    ConjunctiveQuery::new(atoms, free, exist)
        .map_err(|e| Diagnostic::error(e.to_string(), None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Severity;

    const EXAMPLE1: &str = "\
# a simple business scenario
[tbox]
Technician <= Employee
Employee <= not Product

[abox]
Technician(t1)
Product(p1)

[action] create
guard: Employee(x)
new: y
add: Product(y)

[action] fire
guard: Employee(x)
del: Employee(x)
";

    #[test]
    fn example1_parses_completely() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        assert_eq!(doc.kb.tbox.len(), 2);
        assert_eq!(doc.kb.abox.len(), 2);
        assert_eq!(doc.actions.len(), 2);
        let create = &doc.actions[0];
        assert_eq!(create.name.as_str(), "create");
        assert_eq!(create.guard.to_string(), "Employee(x)");
        assert_eq!(create.fresh_vars, vec![Name::from("y")]);
        assert_eq!(create.add_effects.len(), 1);
        assert!(create.del_effects.is_empty());
        let fire = &doc.actions[1];
        assert_eq!(fire.del_effects.len(), 1);
        assert!(fire.fresh_vars.is_empty());
    }

    #[test]
    fn empty_document_parses_to_empty_kb() {
        let doc = parse_dkb("[tbox]\n[abox]\n").unwrap();
        assert!(doc.kb.tbox.is_empty());
        assert!(doc.kb.abox.is_empty());
        assert!(doc.actions.is_empty());
    }

    #[test]
    fn del_with_existential_variable_is_a_semantic_error() {
        let text = "\
[tbox]
[abox]
[action] bad
guard: P(x, _y)
del: P(x, _y)
";
        let diags = parse_dkb(text).unwrap_err();
        assert!(diags.iter().any(|d| d.severity == Severity::Error
            && d.message.contains("delete effects may only use free guard variables")));
        // Diagnostics carry positions.
        assert!(diags.iter().all(|d| d.span.is_some()));
    }

    #[test]
    fn duplicate_action_names_are_rejected() {
        let text = "\
[tbox]
[abox]
[action] a
guard: A(x)
[action] a
guard: A(x)
";
        let diags = parse_dkb(text).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("duplicate action name")));
    }

    #[test]
    fn fresh_variable_overlapping_guard_is_rejected() {
        let text = "\
[tbox]
[abox]
[action] a
guard: A(x)
new: x
add: B(x)
";
        let diags = parse_dkb(text).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("must not appear in the guard")));
    }

    #[test]
    fn negated_lhs_is_rejected() {
        let diags = parse_dkb("[tbox]\nnot A <= B\n[abox]\n").unwrap_err();
        assert!(diags
            .iter()
            .any(|d| d.message.contains("right-hand side")));
    }

    #[test]
    fn bare_wildcard_is_reserved() {
        let diags = parse_dkb("[tbox]\n[abox]\nA(_)\n").unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("reserved")));
    }

    #[test]
    fn inverse_role_facts_are_normalized() {
        let doc = parse_dkb("[tbox]\n[abox]\nP-(a, b)\n").unwrap();
        let expected: ABox = [ABoxAssertion::role("P", "b", "a")].into_iter().collect();
        assert_eq!(doc.kb.abox, expected);
    }

    #[test]
    fn role_evidence_resolves_plain_inclusions() {
        // S is only ever mentioned in this inclusion, but P is used with
        // two arguments, so `S <= P` must be a role inclusion.
        let text = "\
[tbox]
S <= P
[abox]
P(a, b)
";
        let doc = parse_dkb(text).unwrap();
        assert_eq!(
            doc.kb.tbox,
            vec![TBoxAssertion::role_sub(RoleExpr::direct("S"), RoleExpr::direct("P"))]
        );

        // Without any role evidence the same line is a concept inclusion.
        let doc = parse_dkb("[tbox]\nS <= P\n[abox]\n").unwrap();
        assert!(matches!(doc.kb.tbox[0], TBoxAssertion::ConceptInclusion { .. }));
    }

    #[test]
    fn kind_conflicts_are_reported() {
        let text = "\
[tbox]
exists P <= A
[abox]
P(a)
";
        let diags = parse_dkb(text).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("both as a role and as a concept")));
    }

    #[test]
    fn inverse_suffix_forms_parse() {
        let text = "\
[tbox]
exists P- <= A
R- <= not S
funct P-
[abox]
";
        let doc = parse_dkb(text).unwrap();
        assert_eq!(doc.kb.tbox.len(), 3);
        assert_eq!(doc.kb.tbox[0].to_string(), "exists P- <= A");
        assert_eq!(doc.kb.tbox[1].to_string(), "R- <= not S");
        assert_eq!(doc.kb.tbox[2].to_string(), "funct P-");
    }

    #[test]
    fn serialize_round_trips_example1() {
        let doc = parse_dkb(EXAMPLE1).unwrap();
        let text = serialize_dkb(&doc);
        let reparsed = parse_dkb(&text).unwrap();
        assert_eq!(doc, reparsed);
        // Serialization is a fixpoint.
        assert_eq!(text, serialize_dkb(&reparsed));
    }

    #[test]
    fn serialize_empty_document() {
        let doc = DkbDocument { kb: KnowledgeBase::default(), actions: vec![] };
        assert_eq!(serialize_dkb(&doc), "[tbox]\n[abox]\n");
    }

    #[test]
    fn serialize_inverse_exists_axiom() {
        let doc = parse_dkb("[tbox]\nexists P- <= A\n[abox]\n").unwrap();
        assert!(serialize_dkb(&doc).contains("exists P- <= A"));
    }

    #[test]
    fn path_files_parse_in_order() {
        let labels = parse_path("step: pack with x=p1\nstep: ship with x=p1\n").unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0].action.as_str(), "pack");
        assert_eq!(labels[1].binding.get(&Name::from("x")).unwrap(), &Individual::from("p1"));

        assert!(parse_path("").unwrap().is_empty());

        let labels = parse_path("step: create with x=t1, y=p2\n").unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].binding.iter().count(), 2);
    }

    #[test]
    fn path_syntax_errors_are_reported() {
        assert!(parse_path("walk: pack with x=p1\n").is_err());
        assert!(parse_path("step: pack having x=p1\n").is_err());
    }

    #[test]
    fn queries_distinguish_constants_by_known_individuals() {
        let inds: BTreeSet<Individual> =
            [Individual::from("p1"), Individual::from("t1")].into_iter().collect();
        let q = parse_query("Product(p1)", &inds).unwrap();
        assert_eq!(q.disjuncts()[0].to_string(), "Product(p1)");
        assert!(q.disjuncts()[0].free_vars.is_empty());

        let q = parse_query("Employee(x)", &inds).unwrap();
        assert_eq!(q.disjuncts()[0].free_vars, vec![Name::from("x")]);

        let q = parse_query("P(x, _w) & _w != \"p9\" | Q(x, x)", &inds).unwrap();
        assert_eq!(q.disjuncts().len(), 2);
        assert!(q.disjuncts()[0].exist_vars.contains("_w"));
    }

    #[test]
    fn query_disjuncts_must_share_free_variables() {
        let inds = BTreeSet::new();
        assert!(parse_query("A(x) | B(y)", &inds).is_err());
        assert!(parse_query("A(x) | B(x)", &inds).is_ok());
    }

    #[test]
    fn abox_files_parse_with_optional_header() {
        let with_header = parse_abox("[abox]\nProduct(p1)\n").unwrap();
        let bare = parse_abox("Product(p1)\n").unwrap();
        assert_eq!(with_header, bare);
        assert_eq!(with_header.len(), 1);
    }

    #[test]
    fn quoted_individuals_survive_round_trips() {
        let doc = parse_dkb("[tbox]\n[abox]\nA(\"Strange Name\")\n").unwrap();
        let text = serialize_dkb(&doc);
        assert!(text.contains("A(\"Strange Name\")"));
        assert_eq!(parse_dkb(&text).unwrap(), doc);
    }

    #[test]
    fn guards_reject_individuals() {
        let text = "\
[tbox]
[abox]
[action] a
guard: A(\"p1\")
";
        let diags = parse_dkb(text).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("variables, not individuals")));
    }
}
