use super::eval::{apply_binary, apply_unary, DomainError, Scalar};
use super::{BinaryOp, Expr, UnaryOp, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Postfix program for an expression whose variables have been assigned
/// to local slots. Evaluation is a single pass over a value stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<Op>,
    max_stack: usize,
}

impl Tape {
    /// Compiles `e`; `slot` maps each variable in `e` to an index into the
    /// value slice passed to [`Tape::eval`].
    pub fn compile(e: &Expr, slot: &impl Fn(Var) -> usize) -> Tape {
        let mut ops = Vec::with_capacity(e.size());
        let mut depth = 0;
        let mut max_stack = 0;
        emit(e, slot, &mut ops, &mut depth, &mut max_stack);
        Tape { ops, max_stack }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Constant value if the program is a single literal.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(c)] => Some(*c),
            _ => None,
        }
    }

    pub fn eval<T: Scalar>(&self, slots: &[T], stack: &mut Vec<T>) -> Result<T, DomainError> {
        stack.clear();
        stack.reserve(self.max_stack);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(T::from_f64(c)),
                Op::Load(i) => stack.push(slots[i]),
                Op::Unary(u) => {
                    let a = stack.pop().expect("tape underflow");
                    stack.push(apply_unary(u, a)?);
                }
                Op::Binary(b) => {
                    let rhs = stack.pop().expect("tape underflow");
                    let lhs = stack.pop().expect("tape underflow");
                    stack.push(apply_binary(b, lhs, rhs)?);
                }
            }
        }
        let v = stack.pop().expect("empty tape");
        if v.re().is_finite() {
            Ok(v)
        } else {
            Err(DomainError::NonFinite)
        }
    }
}

fn emit(e: &Expr, slot: &impl Fn(Var) -> usize, ops: &mut Vec<Op>, depth: &mut usize, max: &mut usize) {
    match e {
        Expr::Constant(c) => {
            ops.push(Op::Const(*c));
            *depth += 1;
        }
        Expr::Var(v) => {
            ops.push(Op::Load(slot(*v)));
            *depth += 1;
        }
        Expr::Unary(op, a) => {
            emit(a, slot, ops, depth, max);
            ops.push(Op::Unary(*op));
        }
        Expr::Binary(op, a, b) => {
            emit(a, slot, ops, depth, max);
            emit(b, slot, ops, depth, max);
            ops.push(Op::Binary(*op));
            *depth -= 1;
        }
    }
    *max = (*max).max(*depth);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval, parse, EvalEnv};

    #[test]
    fn tape_matches_tree() {
        let e = parse("x2*cos(x1 + atan(u1)) - 3/(1+x1^2) + t", 2, 1).unwrap();
        let slot = |v: Var| match v.kind {
            crate::expr::VarKind::State => v.index,
            crate::expr::VarKind::Control => 2,
            _ => 3,
        };
        let tape = Tape::compile(&e, &slot);
        let vals = [0.3, -1.2, 0.8, 2.5];
        let env = EvalEnv::new(vec![0.3, -1.2], vec![0.8], 2.5, 0.0);
        let mut stack = Vec::new();
        assert_eq!(tape.eval(&vals, &mut stack).unwrap(), eval(&e, &env).unwrap());
    }
}
