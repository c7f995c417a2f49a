use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::{Rc, Weak};

use super::value::JsValue;

pub struct Binding {
    pub value: JsValue,
    pub mutable: bool,
    /// `let`/`const` before their declaration ran.
    pub initialized: bool,
}

pub struct Scope {
    vars: RefCell<HashMap<Rc<str>, Binding>>,
    parent: Option<Rc<Scope>>,
}

pub enum Lookup {
    Found(JsValue),
    Uninitialized,
    Missing,
}

pub enum AssignResult {
    Ok,
    Const,
    Uninitialized,
    Missing,
}

impl Scope {
    pub fn new(parent: Option<Rc<Scope>>) -> Rc<Scope> {
        Rc::new(Scope {
            vars: RefCell::new(HashMap::new()),
            parent,
        })
    }

    pub fn declare(&self, name: Rc<str>, value: JsValue, mutable: bool) {
        self.vars.borrow_mut().insert(
            name,
            Binding {
                value,
                mutable,
                initialized: true,
            },
        );
    }

    pub fn declare_uninitialized(&self, name: Rc<str>) {
        self.vars.borrow_mut().insert(
            name,
            Binding {
                value: JsValue::Undefined,
                mutable: true,
                initialized: false,
            },
        );
    }

    pub fn lookup(&self, name: &str) -> Lookup {
        if let Some(b) = self.vars.borrow().get(name) {
            return if b.initialized {
                Lookup::Found(b.value.clone())
            } else {
                Lookup::Uninitialized
            };
        }
        match &self.parent {
            Some(p) => p.lookup(name),
            None => Lookup::Missing,
        }
    }

    pub fn assign(&self, name: &str, value: JsValue) -> AssignResult {
        if let Some(b) = self.vars.borrow_mut().get_mut(name) {
            if !b.initialized {
                return AssignResult::Uninitialized;
            }
            if !b.mutable {
                return AssignResult::Const;
            }
            b.value = value;
            return AssignResult::Ok;
        }
        match &self.parent {
            Some(p) => p.assign(name, value),
            None => AssignResult::Missing,
        }
    }

    /// Drop all bindings; breaks closure/scope reference cycles after a run.
    pub fn clear(&self) {
        if let Ok(mut vars) = self.vars.try_borrow_mut() {
            vars.clear();
        }
    }
}

/// Every scope created during one run, so cycles can be broken at the end.
#[derive(Default)]
pub struct ScopeRegistry {
    scopes: Vec<Weak<Scope>>,
    high_water: usize,
}

impl ScopeRegistry {
    pub fn track(&mut self, s: &Rc<Scope>) {
        self.scopes.push(Rc::downgrade(s));
        if self.scopes.len() > self.high_water.max(1024) {
            self.scopes.retain(|w| w.strong_count() > 0);
            self.high_water = self.scopes.len() * 2;
        }
    }

    pub fn clear_all(&mut self) {
        for w in self.scopes.drain(..) {
            if let Some(s) = w.upgrade() {
                s.clear();
            }
        }
    }
}
