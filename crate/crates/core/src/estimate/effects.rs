//! Derived mediation effects: the controlled direct and total effects, the
//! local average effect for compliers, and the implied local average effect
//! obtained as the type-probability-weighted average of the three.

use super::EstimateError;

/// The nine building-block functionals behind the mediation effects:
/// type probabilities, the identified outcome moments, and the two
/// mediation-score moments.
#[derive(Clone, Copy, Debug)]
pub struct MediationBlocks {
    pub p_cn: f64,
    pub p_ca: f64,
    pub p_cc: f64,
    /// `E[ρ(Y*(1,0)) 1{CN}]`
    pub y10_cn: f64,
    /// `E[ρ(Y*(0,0)) 1{CN}]` (mediation score)
    pub y00_cn: f64,
    /// `E[ρ(Y*(1,1)) 1{CA}]` (mediation score)
    pub y11_ca: f64,
    /// `E[ρ(Y*(0,1)) 1{CA}]`
    pub y01_ca: f64,
    /// `E[ρ(Y*(1,1)) 1{CA or CC}]`
    pub y11_ca_cc: f64,
    /// `E[ρ(Y*(0,0)) 1{CN or CC}]`
    pub y00_cn_cc: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct MediationEffects {
    pub cde0: f64,
    pub cde1: f64,
    pub cte: f64,
    pub late: f64,
    pub implied_late: f64,
}

fn guard(name: &str, value: f64, floor: f64) -> Result<(), EstimateError> {
    if value < floor {
        return Err(EstimateError::SmallDenominator { name: name.to_string(), value, floor });
    }
    Ok(())
}

/// Implied complier effect from the three controlled effects and the type
/// probabilities: the probability-weighted average over the complier types.
pub fn implied_late(
    p_cn: f64,
    p_ca: f64,
    p_cc: f64,
    cde0: f64,
    cde1: f64,
    cte: f64,
    p_min: f64,
) -> Result<f64, EstimateError> {
    let total = p_cn + p_ca + p_cc;
    guard("P(complier)", total, p_min)?;
    Ok((p_cn * cde0 + p_ca * cde1 + p_cc * cte) / total)
}

/// Assembles all effects from the building blocks. Each controlled effect is
/// a difference of outcome moments over its type probability; the total
/// effect for double compliers backs the `CC` contributions out of the
/// group moments.
pub fn derived_mediation_effects(
    blocks: &MediationBlocks,
    p_min: f64,
) -> Result<MediationEffects, EstimateError> {
    guard("P(CN)", blocks.p_cn, p_min)?;
    guard("P(CA)", blocks.p_ca, p_min)?;
    guard("P(CC)", blocks.p_cc, p_min)?;
    let cde0 = (blocks.y10_cn - blocks.y00_cn) / blocks.p_cn;
    let cde1 = (blocks.y11_ca - blocks.y01_ca) / blocks.p_ca;
    let cte = ((blocks.y11_ca_cc - blocks.y11_ca) - (blocks.y00_cn_cc - blocks.y00_cn))
        / blocks.p_cc;
    let p_compliers = blocks.p_cn + blocks.p_ca + blocks.p_cc;
    guard("P(complier)", p_compliers, p_min)?;
    let late =
        ((blocks.y10_cn + blocks.y11_ca_cc) - (blocks.y00_cn_cc + blocks.y01_ca)) / p_compliers;
    let implied = implied_late(blocks.p_cn, blocks.p_ca, blocks.p_cc, cde0, cde1, cte, p_min)?;
    Ok(MediationEffects { cde0, cde1, cte, late, implied_late: implied })
}
