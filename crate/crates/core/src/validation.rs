use std::fmt;

use serde::{Deserialize, Serialize};

/// One violated invariant, addressed by its dotted field path
/// (`vehicle.wheel_radius`, `attack.spl_at_source`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// Every invariant a configuration violates, not just the first one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl ValidationError {
    pub fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            violations: vec![Violation {
                field: field.into(),
                message: message.into(),
            }],
        }
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, " {}: {};", v.field, v.message)?;
        }
        Ok(())
    }
}

/// Accumulates violations under a field prefix.
#[derive(Debug, Default)]
pub struct Validator {
    prefix: Vec<String>,
    violations: Vec<Violation>,
}

impl Validator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nested<F: FnOnce(&mut Self)>(&mut self, name: &str, f: F) {
        self.prefix.push(name.to_string());
        f(self);
        self.prefix.pop();
    }

    fn path(&self, field: &str) -> String {
        if self.prefix.is_empty() {
            field.to_string()
        } else {
            format!("{}.{}", self.prefix.join("."), field)
        }
    }

    pub fn fail(&mut self, field: &str, message: impl Into<String>) {
        let field = self.path(field);
        self.violations.push(Violation {
            field,
            message: message.into(),
        });
    }

    pub fn check(&mut self, ok: bool, field: &str, message: impl Into<String>) {
        if !ok {
            self.fail(field, message);
        }
    }

    pub fn finite(&mut self, value: f64, field: &str) -> bool {
        if value.is_finite() {
            true
        } else {
            self.fail(field, "must be finite");
            false
        }
    }

    pub fn positive(&mut self, value: f64, field: &str) {
        if self.finite(value, field) && value <= 0.0 {
            self.fail(field, format!("must be > 0 (got {value})"));
        }
    }

    pub fn non_negative(&mut self, value: f64, field: &str) {
        if self.finite(value, field) && value < 0.0 {
            self.fail(field, format!("must be >= 0 (got {value})"));
        }
    }

    pub fn in_range(&mut self, value: f64, lo: f64, hi: f64, field: &str) {
        if self.finite(value, field) && !(lo..=hi).contains(&value) {
            self.fail(field, format!("must be in [{lo}, {hi}] (got {value})"));
        }
    }

    pub fn finish(self) -> Result<(), ValidationError> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationError {
                violations: self.violations,
            })
        }
    }
}
