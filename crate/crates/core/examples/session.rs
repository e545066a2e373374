//! One sender/receiver session in virtual time over a lossy in-process link.

use std::sync::Arc;
use std::time::Duration;

use stocoap::channel::{Clock, LossProcess, VirtualClock};
use stocoap::experiments::synthetic_image;
use stocoap::image::tile;
use stocoap::model::{plan_transmission, BlockIndexSet, ChannelParams, SizingParams, ValueMap};
use stocoap::protocol::{InProcessLink, Receiver, ReceiverConfig, Sender, SenderConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let image = synthetic_image(128, 64, 1, 2)?;
    let (grid, blocks) = tile(&image, 8, 8)?;
    let n = grid.block_count();
    let plan = plan_transmission(
        ChannelParams::new(0.3, 64)?,
        SizingParams::from_ratio(64, n, 2.0),
        ValueMap::uniform(n)?,
        BlockIndexSet::new(n)?,
    )?;
    let expected = plan.expected_filling_rate();
    let config = SenderConfig {
        seed: 11,
        send_interval: Duration::from_millis(2),
        ..SenderConfig::default()
    };
    let mut sender = Sender::new(plan, grid, Arc::new(blocks), config)?;

    let clock = VirtualClock::new();
    // The first request copy is lost and retransmitted after the ACK timeout.
    let mut link = InProcessLink::new(
        Receiver::new(ReceiverConfig::default()),
        clock.clone(),
        LossProcess::scripted([1]),
    );
    let agreement = sender.run_agreement(&mut link, &clock)?;
    println!("agreed after {} requests at {:?}", agreement.requests_sent, agreement.established_at);

    let mut link = InProcessLink::new(link.into_receiver(), clock.clone(), LossProcess::per_packet(0.3, 12));
    let log = sender.run_block_phase(&mut link, &clock)?;
    println!("{} transmissions over {:?}", log.len(), log.duration);

    let mut receiver = link.into_receiver();
    let deadline = receiver.deadline().expect("agreed");
    clock.advance_to(deadline);
    let (_, report) = receiver.finalize(clock.now())?;
    println!(
        "{} of {n} blocks, filling rate {:.3} (expected {expected:.3}), stats {:?}",
        report.unique_blocks, report.pixel_filling_rate, report.stats
    );
    Ok(())
}
