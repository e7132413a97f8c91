//! One-shot dimensional audit of the 3-state reactor drift. Units are
//! exponent vectors over (mol, L, min, K, J); the audit rebuilds the unit of
//! every drift term symbolically and checks each component is homogeneous
//! with the expected rate unit.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unit {
    mol: i8,
    l: i8,
    min: i8,
    k: i8,
    j: i8,
}

impl Unit {
    pub const ONE: Unit = Unit {
        mol: 0,
        l: 0,
        min: 0,
        k: 0,
        j: 0,
    };

    const fn new(mol: i8, l: i8, min: i8, k: i8, j: i8) -> Unit {
        Unit { mol, l, min, k, j }
    }

    fn mul(self, o: Unit) -> Unit {
        Unit::new(
            self.mol + o.mol,
            self.l + o.l,
            self.min + o.min,
            self.k + o.k,
            self.j + o.j,
        )
    }

    fn div(self, o: Unit) -> Unit {
        Unit::new(
            self.mol - o.mol,
            self.l - o.l,
            self.min - o.min,
            self.k - o.k,
            self.j - o.j,
        )
    }
}

pub fn audit_cstr3() -> Result<(), String> {
    let per_min = Unit::new(0, 0, -1, 0, 0);
    let mol_per_l = Unit::new(1, -1, 0, 0, 0);
    let kelvin = Unit::new(0, 0, 0, 1, 0);
    let j_per_mol = Unit::new(-1, 0, 0, 0, 1);
    let j_per_mol_k = Unit::new(-1, 0, 0, -1, 1);
    let j_per_l_k = Unit::new(0, -1, 0, -1, 1);

    let fv = per_min; // (L/min) / L
    let rate = per_min; // k0 e^{-E/(R T)}, exponent must be dimensionless
    let arrhenius_exponent = j_per_mol.div(j_per_mol_k.mul(kelvin));
    if arrhenius_exponent != Unit::ONE {
        return Err("Arrhenius exponent not dimensionless".into());
    }

    let conc_rate = mol_per_l.mul(per_min);
    let comp1 = fv.mul(mol_per_l);
    let comp1_reaction = rate.mul(mol_per_l);
    if comp1 != conc_rate || comp1_reaction != conc_rate {
        return Err("component 1 not homogeneous in mol/(L min)".into());
    }

    let temp_rate = kelvin.mul(per_min);
    let comp3_flow = fv.mul(kelvin);
    let comp3_reaction = j_per_mol.mul(rate).mul(mol_per_l).div(j_per_l_k);
    if comp3_flow != temp_rate || comp3_reaction != temp_rate {
        return Err("component 3 not homogeneous in K/min".into());
    }
    Ok(())
}
