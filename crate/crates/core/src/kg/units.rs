//! Dimensional algebra for units of measurement.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::transform::TransformOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDim {
    Mass,
    Length,
    Time,
    Temperature,
    Currency,
    Count,
}

impl BaseDim {
    pub const ALL: [BaseDim; 6] = [
        BaseDim::Mass,
        BaseDim::Length,
        BaseDim::Time,
        BaseDim::Temperature,
        BaseDim::Currency,
        BaseDim::Count,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseDim::Mass => "mass",
            BaseDim::Length => "length",
            BaseDim::Time => "time",
            BaseDim::Temperature => "temperature",
            BaseDim::Currency => "currency",
            BaseDim::Count => "count",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Exponents over the base dimensions. Rational so that `sqrt` stays exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Dims([Rational64; 6]);

impl Dims {
    pub fn dimensionless() -> Self {
        Self::default()
    }

    pub fn of(base: BaseDim, exponent: i64) -> Self {
        Self::dimensionless().with(base, Rational64::from_integer(exponent))
    }

    pub fn with(mut self, base: BaseDim, exponent: Rational64) -> Self {
        self.0[base.index()] = exponent;
        self
    }

    pub fn get(&self, base: BaseDim) -> Rational64 {
        self.0[base.index()]
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(|e| *e == Rational64::from_integer(0))
    }

    pub fn scale(self, factor: Rational64) -> Self {
        Self(self.0.map(|e| e * factor))
    }
}

impl Add for Dims {
    type Output = Dims;
    fn add(self, rhs: Dims) -> Dims {
        let mut out = self;
        for (o, r) in out.0.iter_mut().zip(rhs.0) {
            *o += r;
        }
        out
    }
}

impl Sub for Dims {
    type Output = Dims;
    fn sub(self, rhs: Dims) -> Dims {
        self + (-rhs)
    }
}

impl Neg for Dims {
    type Output = Dims;
    fn neg(self) -> Dims {
        Self(self.0.map(|e| -e))
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let mut first = true;
        for base in BaseDim::ALL {
            let e = self.get(base);
            if e == Rational64::from_integer(0) {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            f.write_str(base.name())?;
            if e != Rational64::from_integer(1) {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

/// A registered unit individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub name: String,
    pub dims: Dims,
    /// Class the unit is asserted under (a subclass of `Units`).
    pub class: String,
}

/// Unit of a transformation's output given its operands' units; `None`
/// stands for an unknown unit.
///
/// Aggregations take `[group key, value]` and carry the value's unit;
/// one_hot, logical and calendar ops are dimensionless whatever their
/// inputs. For the remaining ops any unknown input makes the output
/// unknown.
pub fn propagate_unit(op: TransformOp, inputs: &[Option<Dims>]) -> Option<Dims> {
    use TransformOp::*;
    if inputs.len() != op.arity().operands() {
        return None;
    }
    match op {
        OneHot | And | Or | Day | Month | Year | IsWeekend => Some(Dims::dimensionless()),
        GroupMin | GroupMax | GroupMean | GroupSum => inputs[1],
        Mul => Some(inputs[0]? + inputs[1]?),
        Div => Some(inputs[0]? - inputs[1]?),
        Add | Sub => {
            let (a, b) = (inputs[0]?, inputs[1]?);
            (a == b).then_some(a)
        }
        Square => Some(inputs[0]?.scale(Rational64::from_integer(2))),
        Sqrt => Some(inputs[0]?.scale(Rational64::new(1, 2))),
        Reciprocal => Some(-inputs[0]?),
        Log => inputs[0]?.is_dimensionless().then(Dims::dimensionless),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kg() -> Dims {
        Dims::of(BaseDim::Mass, 1)
    }
    fn m() -> Dims {
        Dims::of(BaseDim::Length, 1)
    }

    #[test]
    fn bmi_units() {
        let m2 = propagate_unit(TransformOp::Square, &[Some(m())]).unwrap();
        let bmi = propagate_unit(TransformOp::Div, &[Some(kg()), Some(m2)]).unwrap();
        assert_eq!(bmi, Dims::of(BaseDim::Mass, 1).with(BaseDim::Length, Rational64::from_integer(-2)));
        assert_eq!(bmi.to_string(), "mass·length^-2");
    }

    #[test]
    fn mixed_addition_is_unknown() {
        let celsius = Dims::of(BaseDim::Temperature, 1);
        let usd = Dims::of(BaseDim::Currency, 1);
        assert_eq!(propagate_unit(TransformOp::Add, &[Some(celsius), Some(usd)]), None);
        assert_eq!(propagate_unit(TransformOp::Sub, &[Some(celsius), Some(celsius)]), Some(celsius));
    }

    #[test]
    fn sqrt_of_area() {
        let area = m().scale(Rational64::from_integer(2));
        assert_eq!(propagate_unit(TransformOp::Sqrt, &[Some(area)]), Some(m()));
        let half = propagate_unit(TransformOp::Sqrt, &[Some(m())]).unwrap();
        assert_eq!(half.get(BaseDim::Length), Rational64::new(1, 2));
    }

    #[test]
    fn fixed_and_passthrough_units() {
        assert_eq!(propagate_unit(TransformOp::Log, &[Some(m())]), None);
        assert_eq!(
            propagate_unit(TransformOp::Log, &[Some(Dims::dimensionless())]),
            Some(Dims::dimensionless())
        );
        assert_eq!(propagate_unit(TransformOp::OneHot, &[None]), Some(Dims::dimensionless()));
        assert_eq!(propagate_unit(TransformOp::GroupSum, &[None, Some(kg())]), Some(kg()));
        assert_eq!(propagate_unit(TransformOp::GroupMean, &[Some(m()), None]), None);
        assert_eq!(propagate_unit(TransformOp::Mul, &[Some(m()), None]), None);
        assert_eq!(propagate_unit(TransformOp::Reciprocal, &[Some(m())]), Some(-m()));
        assert_eq!(propagate_unit(TransformOp::Mul, &[Some(m())]), None);
    }

    fn dims_strategy() -> impl Strategy<Value = Dims> {
        prop::array::uniform6((-4i64..=4, 1i64..=3)).prop_map(|exps| {
            let mut d = Dims::dimensionless();
            for (base, (n, q)) in BaseDim::ALL.into_iter().zip(exps) {
                d = d.with(base, Rational64::new(n, q));
            }
            d
        })
    }

    proptest! {
        #[test]
        fn mul_plus_div_is_twice_left(a in dims_strategy(), b in dims_strategy()) {
            let mul = propagate_unit(TransformOp::Mul, &[Some(a), Some(b)]).unwrap();
            let div = propagate_unit(TransformOp::Div, &[Some(a), Some(b)]).unwrap();
            prop_assert_eq!(mul + div, a.scale(Rational64::from_integer(2)));
        }

        #[test]
        fn square_undoes_sqrt(a in dims_strategy()) {
            let root = propagate_unit(TransformOp::Sqrt, &[Some(a)]);
            prop_assert_eq!(propagate_unit(TransformOp::Square, &[root]), Some(a));
        }
    }
}
