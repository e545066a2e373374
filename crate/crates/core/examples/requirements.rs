//! Solving block values from per-block reception requirements.

use stocoap::model::{
    arrival_probability, feasibility_check, values_from_requirements, ChannelParams, ModelError,
    Requirements,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let channel = ChannelParams::new(0.2, 64)?;
    let (k, n) = (1, 64);
    let mut required = vec![0.0; 16];
    required[5] = 0.95;
    required[6] = 0.9;
    required[9] = 0.8;
    let req = Requirements::new(required.clone())?;
    println!("{}", feasibility_check(&req, &channel, k, n));
    let values = values_from_requirements(&req, &channel, k, n)?;
    for (id, (&p, &r)) in values.probabilities().iter().zip(&required).enumerate() {
        if r > 0.0 {
            let rho = arrival_probability(p, &channel, k, n)?;
            println!("block {id}: required {r}, p = {p:.4}, arrival = {rho:.4}");
        }
    }

    let too_much = Requirements::new(vec![0.99; 16])?;
    match values_from_requirements(&too_much, &channel, k, n) {
        Err(ModelError::Infeasible(report)) => println!("rejected: {report}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
