use std::time::Duration;

use stocoap::channel::{
    sim_pair, ChannelConfig, ChannelMode, Clock, LossProcess, Lossy, SystemClock, Transport,
};

const ATTEMPTS: usize = 100_000;

fn delivered_attempts(mut process: LossProcess, k: usize) -> usize {
    (0..ATTEMPTS)
        .filter(|_| process.decide(k).iter().all(|&kept| kept))
        .count()
}

#[test]
fn per_packet_and_per_attempt_agree_at_one_fragment() {
    // Two-sample proportion test, two-sided at 0.001 (|z| < 3.2905).
    for (i, loss) in [0.1, 0.25, 0.5, 0.8].into_iter().enumerate() {
        let a = delivered_attempts(LossProcess::per_packet(loss, 100 + i as u64), 1) as f64;
        let b = delivered_attempts(LossProcess::per_attempt(loss, 200 + i as u64), 1) as f64;
        let n = ATTEMPTS as f64;
        let pooled = (a + b) / (2.0 * n);
        let z = (a / n - b / n) / (pooled * (1.0 - pooled) * 2.0 / n).sqrt();
        assert!(z.abs() < 3.2905, "loss {loss}: z = {z}");
    }
}

#[test]
fn multi_fragment_rates_follow_their_own_formulas() {
    for (loss, k) in [(0.25, 2usize), (0.5, 3), (0.1, 4)] {
        let n = ATTEMPTS as f64;
        let packet = delivered_attempts(LossProcess::per_packet(loss, 7), k) as f64 / n;
        let block = delivered_attempts(LossProcess::per_attempt(loss, 8), k) as f64 / n;
        let all_fragments = (1.0 - loss).powi(k as i32);
        let at_least_one = 1.0 - loss.powi(k as i32);
        let tol = |p: f64| 4.0 * (p * (1.0 - p) / n).sqrt();
        assert!((packet - all_fragments).abs() <= tol(all_fragments), "{loss} {k}: {packet}");
        assert!((block - at_least_one).abs() <= tol(at_least_one), "{loss} {k}: {block}");
    }
}

#[test]
fn lossy_sim_channel_in_order_with_script() {
    let clock = SystemClock::new();
    let (a, mut b) = sim_pair(Duration::ZERO, clock);
    let mut tx = Lossy::new(a, ChannelConfig::scripted([2]).loss_process());
    for d in [b"one".as_slice(), b"two", b"three"] {
        tx.send(d).unwrap();
    }
    let deadline = clock.now() + Duration::from_millis(100);
    assert_eq!(b.recv_until(deadline).unwrap().unwrap(), b"one");
    assert_eq!(b.recv_until(deadline).unwrap().unwrap(), b"three");
    assert_eq!(tx.loss().dropped(), 1);
}

#[test]
fn channel_config_selects_process() {
    let mut sim_block = ChannelConfig::new(ChannelMode::SimBlock, 1.0, 3).unwrap().loss_process();
    assert_eq!(sim_block.decide(2), vec![false, false]);
    let mut udp = ChannelConfig::new(ChannelMode::Udp, 0.0, 3).unwrap().loss_process();
    assert!(udp.decide(100).iter().all(|&k| k));
    let mut same = ChannelConfig::new(ChannelMode::SimPacket, 0.3, 9).unwrap();
    let first = same.loss_process().decide(1000);
    assert_eq!(first, same.loss_process().decide(1000));
    same.seed = 10;
    assert_ne!(first, same.loss_process().decide(1000));
}
