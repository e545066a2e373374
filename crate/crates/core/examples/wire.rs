//! Encoding and decoding agreement and block data packets.

use stocoap::wire::{self, AgreementRequest, Packet};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let request = AgreementRequest {
        session_id: 7,
        block_id_bits: wire::block_id_bits(576),
        channels: 1,
        width: 256,
        height: 144,
        block_width: 8,
        block_height: 8,
        packet_size: 32,
        total_transmissions: 576,
        send_interval_us: 1000,
    };
    request.validate()?;
    let bytes = wire::encode(&Packet::request(1, request))?;
    println!("request ({} bytes): {}", bytes.len(), hex(&bytes));
    assert_eq!(wire::decode(&bytes, None)?, Packet::request(1, request));

    let layout = request.layout();
    let header = layout.bt_header(575, 1);
    let packet = Packet::fragment(2, header, vec![0xab; layout.packet_size]);
    let bytes = wire::encode(&packet)?;
    println!(
        "fragment: {} id bits, {} fragment bits, {}-byte BT-header, {} bytes total",
        header.block_id_bits,
        header.fragment_bits,
        header.encoded_len(),
        bytes.len()
    );
    println!("header bytes: {}", hex(&bytes[..4 + header.encoded_len()]));
    assert_eq!(wire::decode(&bytes, Some(&layout))?, packet);
    Ok(())
}
