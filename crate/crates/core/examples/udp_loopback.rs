//! Sending a synthetic image to a receiver over UDP on localhost.

use std::thread;
use std::time::Duration;

use stocoap::experiments::{cmd_recv, cmd_send, synthetic_image, ExperimentSpec};
use stocoap::image::encode_pnm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("stocoap-udp-example");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("input.pgm");
    std::fs::write(&input, encode_pnm(&synthetic_image(64, 32, 1, 5)?))?;

    let port = std::net::UdpSocket::bind("127.0.0.1:0")?.local_addr()?.port();
    let addr = format!("127.0.0.1:{port}");
    let recv_spec = ExperimentSpec {
        out_dir: dir.join("recv"),
        ..ExperimentSpec::default()
    };
    let listen = addr.clone();
    let receiver = thread::spawn(move || cmd_recv(&recv_spec, &listen, Duration::from_secs(10)));
    thread::sleep(Duration::from_millis(100));

    let send_spec = ExperimentSpec {
        image: Some(input),
        ratios: vec![2.0],
        losses: vec![0.2],
        out_dir: dir.join("send"),
        ..ExperimentSpec::default()
    };
    let sent = cmd_send(&send_spec, &addr, "127.0.0.1:0")?;
    let report = receiver.join().expect("receiver thread")?;
    println!(
        "sent {} transmissions, received {} of {} blocks, filling rate {:.3}",
        sent.log.len(),
        report.unique_blocks,
        report.block_count,
        report.pixel_filling_rate
    );
    println!("outputs in {}", dir.display());
    Ok(())
}
