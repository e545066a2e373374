//! Bit-exact packet codec.
//!
//! Every packet starts with a 4-byte CoAP-style base header (version 1, token
//! length 0, no options). Block data follows it directly, with no payload
//! marker:
//!
//! ```text
//!  0                   1                   2                   3
//!  0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! |Ver| T |  TKL  |      Code     |          Message ID           |
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! | BT-header: 0-pad | block id (b bits) | fragment (f bits) | ...
//! +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//! | fragment bytes (s_pkt) ...
//! ```
//!
//! The BT-header is `ceil((b + f) / 8)` bytes, big-endian, left-padded with
//! zero bits. `b = max(1, ceil(log2 |I|))` and `f = ceil(log2 K)`.
//!
//! Agreement request body (CON, 0.02), 22 bytes, big-endian:
//!
//! | offset | size | field                 |
//! |--------|------|-----------------------|
//! | 0      | 2    | session id            |
//! | 2      | 1    | block id bits         |
//! | 3      | 1    | channels (1 or 3)     |
//! | 4      | 2    | image width           |
//! | 6      | 2    | image height          |
//! | 8      | 2    | block width           |
//! | 10     | 2    | block height          |
//! | 12     | 2    | packet size           |
//! | 14     | 4    | total transmissions N |
//! | 18     | 4    | send interval (µs)    |
//!
//! Agreement ACK body (ACK, 2.04): the 2-byte session id.
//! Block data packets are NON with code 0.03.

use thiserror::Error;

pub const VERSION: u8 = 1;
pub const BASE_HEADER_LEN: usize = 4;
pub const AGREEMENT_REQUEST_LEN: usize = 22;
pub const AGREEMENT_ACK_LEN: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("short header: {0} bytes")]
    ShortHeader(usize),
    #[error("bad version {0}")]
    BadVersion(u8),
    #[error("token length {0} (tokens are not used)")]
    TokenPresent(u8),
    #[error("unknown code {code:#04x} for message type {msg_type:?}")]
    UnknownCode { msg_type: MessageType, code: u8 },
    #[error("length mismatch: expected {expected} bytes, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("{field} value {value} does not fit in {bits} bits")]
    FieldOverflow {
        field: &'static str,
        value: u64,
        bits: u8,
    },
    #[error("non-zero padding bits in BT-header")]
    NonZeroPadding,
    #[error("block id {id} out of range for {count} blocks")]
    BlockOutOfRange { id: u32, count: u32 },
    #[error("fragment index {index} out of range for {count} fragments")]
    FragmentOutOfRange { index: u32, count: u32 },
    #[error("block data received without an agreed session layout")]
    NoSession,
    #[error("invalid agreement parameters: {0}")]
    InvalidAgreement(String),
}

pub type Result<T> = std::result::Result<T, WireError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Confirmable = 0,
    NonConfirmable = 1,
    Acknowledgement = 2,
    Reset = 3,
}

impl MessageType {
    fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0 => MessageType::Confirmable,
            1 => MessageType::NonConfirmable,
            2 => MessageType::Acknowledgement,
            _ => MessageType::Reset,
        }
    }
}

/// CoAP code byte, `class << 5 | detail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Code(pub u8);

impl Code {
    pub const POST: Code = Code(0x02);
    pub const PUT: Code = Code(0x03);
    pub const CHANGED: Code = Code(0x44);

    pub fn class(self) -> u8 {
        self.0 >> 5
    }

    pub fn detail(self) -> u8 {
        self.0 & 0x1f
    }
}

impl std::fmt::Display for Code {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.class(), self.detail())
    }
}

/// Version and token length are fixed (1 and 0) and not stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaseHeader {
    pub msg_type: MessageType,
    pub code: Code,
    pub message_id: u16,
}

impl BaseHeader {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(VERSION << 6 | (self.msg_type as u8) << 4);
        out.push(self.code.0);
        out.extend_from_slice(&self.message_id.to_be_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BASE_HEADER_LEN {
            return Err(WireError::ShortHeader(bytes.len()));
        }
        let version = bytes[0] >> 6;
        if version != VERSION {
            return Err(WireError::BadVersion(version));
        }
        let tkl = bytes[0] & 0x0f;
        if tkl != 0 {
            return Err(WireError::TokenPresent(tkl));
        }
        Ok(Self {
            msg_type: MessageType::from_bits(bytes[0] >> 4),
            code: Code(bytes[1]),
            message_id: u16::from_be_bytes([bytes[2], bytes[3]]),
        })
    }
}

/// `ceil(log2 n)`, with `ceil(log2 1) = 0`.
pub fn ceil_log2(n: u64) -> u8 {
    if n <= 1 {
        0
    } else {
        (64 - (n - 1).leading_zeros()) as u8
    }
}

/// Width of the Block ID field, never less than one bit.
pub fn block_id_bits(block_count: u32) -> u8 {
    ceil_log2(block_count as u64).max(1)
}

pub fn fragment_bits(fragments: u32) -> u8 {
    ceil_log2(fragments as u64)
}

/// The block transmission header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BtHeader {
    pub block_id: u32,
    pub block_id_bits: u8,
    pub fragment_index: u32,
    pub fragment_bits: u8,
}

impl BtHeader {
    pub fn encoded_len(&self) -> usize {
        bt_header_len(self.block_id_bits, self.fragment_bits)
    }
}

pub fn bt_header_len(block_id_bits: u8, fragment_bits: u8) -> usize {
    (block_id_bits as usize + fragment_bits as usize).div_ceil(8)
}

/// Session geometry needed to parse block data, fixed by the agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataLayout {
    pub block_count: u32,
    pub fragments: u32,
    pub packet_size: usize,
}

impl DataLayout {
    pub fn block_id_bits(&self) -> u8 {
        block_id_bits(self.block_count)
    }

    pub fn fragment_bits(&self) -> u8 {
        fragment_bits(self.fragments)
    }

    pub fn bt_header_len(&self) -> usize {
        bt_header_len(self.block_id_bits(), self.fragment_bits())
    }

    /// `4 + ceil((b + f) / 8) + s_pkt`.
    pub fn data_packet_len(&self) -> usize {
        BASE_HEADER_LEN + self.bt_header_len() + self.packet_size
    }

    pub fn bt_header(&self, block_id: u32, fragment_index: u32) -> BtHeader {
        BtHeader {
            block_id,
            block_id_bits: self.block_id_bits(),
            fragment_index,
            fragment_bits: self.fragment_bits(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgreementRequest {
    pub session_id: u16,
    pub block_id_bits: u8,
    pub channels: u8,
    pub width: u16,
    pub height: u16,
    pub block_width: u16,
    pub block_height: u16,
    pub packet_size: u16,
    pub total_transmissions: u32,
    pub send_interval_us: u32,
}

impl AgreementRequest {
    pub fn block_bytes(&self) -> usize {
        self.block_width as usize * self.block_height as usize * self.channels as usize
    }

    pub fn block_count(&self) -> u32 {
        (self.width as u32 / self.block_width.max(1) as u32)
            * (self.height as u32 / self.block_height.max(1) as u32)
    }

    /// Checks the parameters describe a consistent, tileable session.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(WireError::InvalidAgreement(msg.to_string()));
        if self.width == 0
            || self.height == 0
            || self.block_width == 0
            || self.block_height == 0
            || self.packet_size == 0
            || self.total_transmissions == 0
            || self.send_interval_us == 0
        {
            return bad("all fields must be positive");
        }
        if self.channels != 1 && self.channels != 3 {
            return bad("channels must be 1 or 3");
        }
        if !self.width.is_multiple_of(self.block_width) || !self.height.is_multiple_of(self.block_height) {
            return bad("block size does not divide image size");
        }
        if !self.block_bytes().is_multiple_of(self.packet_size as usize) {
            return bad("packet size does not divide block size");
        }
        if self.block_id_bits != block_id_bits(self.block_count()) {
            return bad("block id bits inconsistent with block count");
        }
        Ok(())
    }

    pub fn layout(&self) -> DataLayout {
        DataLayout {
            block_count: self.block_count(),
            fragments: (self.block_bytes() / self.packet_size.max(1) as usize) as u32,
            packet_size: self.packet_size as usize,
        }
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.push(self.block_id_bits);
        out.push(self.channels);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.block_width.to_be_bytes());
        out.extend_from_slice(&self.block_height.to_be_bytes());
        out.extend_from_slice(&self.packet_size.to_be_bytes());
        out.extend_from_slice(&self.total_transmissions.to_be_bytes());
        out.extend_from_slice(&self.send_interval_us.to_be_bytes());
    }

    fn decode(body: &[u8]) -> Result<Self> {
        if body.len() != AGREEMENT_REQUEST_LEN {
            return Err(WireError::LengthMismatch {
                expected: AGREEMENT_REQUEST_LEN,
                actual: body.len(),
            });
        }
        let u16_at = |i: usize| u16::from_be_bytes([body[i], body[i + 1]]);
        let u32_at = |i: usize| u32::from_be_bytes([body[i], body[i + 1], body[i + 2], body[i + 3]]);
        Ok(Self {
            session_id: u16_at(0),
            block_id_bits: body[2],
            channels: body[3],
            width: u16_at(4),
            height: u16_at(6),
            block_width: u16_at(8),
            block_height: u16_at(10),
            packet_size: u16_at(12),
            total_transmissions: u32_at(14),
            send_interval_us: u32_at(18),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgreementAck {
    pub session_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockFragment {
    pub header: BtHeader,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Request(AgreementRequest),
    Ack(AgreementAck),
    Block(BlockFragment),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub base: BaseHeader,
    pub body: Body,
}

impl Packet {
    pub fn request(message_id: u16, request: AgreementRequest) -> Self {
        Self {
            base: BaseHeader {
                msg_type: MessageType::Confirmable,
                code: Code::POST,
                message_id,
            },
            body: Body::Request(request),
        }
    }

    /// ACK carrying the message id of the request it confirms.
    pub fn ack(message_id: u16, session_id: u16) -> Self {
        Self {
            base: BaseHeader {
                msg_type: MessageType::Acknowledgement,
                code: Code::CHANGED,
                message_id,
            },
            body: Body::Ack(AgreementAck { session_id }),
        }
    }

    pub fn fragment(message_id: u16, header: BtHeader, data: Vec<u8>) -> Self {
        Self {
            base: BaseHeader {
                msg_type: MessageType::NonConfirmable,
                code: Code::PUT,
                message_id,
            },
            body: Body::Block(BlockFragment { header, data }),
        }
    }
}

fn expected_kind(base: &BaseHeader) -> Option<Kind> {
    match (base.msg_type, base.code) {
        (MessageType::Confirmable, Code::POST) => Some(Kind::Request),
        (MessageType::Acknowledgement, Code::CHANGED) => Some(Kind::Ack),
        (MessageType::NonConfirmable, Code::PUT) => Some(Kind::Block),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Request,
    Ack,
    Block,
}

fn check_fits(field: &'static str, value: u32, bits: u8) -> Result<()> {
    if bits < 32 && (value as u64) >> bits != 0 {
        return Err(WireError::FieldOverflow {
            field,
            value: value as u64,
            bits,
        });
    }
    Ok(())
}

pub fn encode(packet: &Packet) -> Result<Vec<u8>> {
    let kind = expected_kind(&packet.base).ok_or(WireError::UnknownCode {
        msg_type: packet.base.msg_type,
        code: packet.base.code.0,
    })?;
    let body_kind = match packet.body {
        Body::Request(_) => Kind::Request,
        Body::Ack(_) => Kind::Ack,
        Body::Block(_) => Kind::Block,
    };
    if kind != body_kind {
        return Err(WireError::UnknownCode {
            msg_type: packet.base.msg_type,
            code: packet.base.code.0,
        });
    }
    let mut out = Vec::with_capacity(BASE_HEADER_LEN + AGREEMENT_REQUEST_LEN);
    packet.base.encode_into(&mut out);
    match &packet.body {
        Body::Request(req) => req.encode_into(&mut out),
        Body::Ack(ack) => out.extend_from_slice(&ack.session_id.to_be_bytes()),
        Body::Block(frag) => {
            let h = &frag.header;
            if h.block_id_bits == 0 || h.block_id_bits as u32 + h.fragment_bits as u32 > 64 {
                return Err(WireError::FieldOverflow {
                    field: "block_id_bits",
                    value: h.block_id_bits as u64,
                    bits: 64 - h.fragment_bits.min(64),
                });
            }
            check_fits("block_id", h.block_id, h.block_id_bits)?;
            check_fits("fragment_index", h.fragment_index, h.fragment_bits)?;
            let value = ((h.block_id as u64) << h.fragment_bits) | h.fragment_index as u64;
            let len = h.encoded_len();
            out.extend_from_slice(&value.to_be_bytes()[8 - len..]);
            out.extend_from_slice(&frag.data);
        }
    }
    Ok(out)
}

/// Decodes one datagram. Block data needs the session layout; agreement
/// messages decode without it.
pub fn decode(bytes: &[u8], layout: Option<&DataLayout>) -> Result<Packet> {
    let base = BaseHeader::decode(bytes)?;
    let kind = expected_kind(&base).ok_or(WireError::UnknownCode {
        msg_type: base.msg_type,
        code: base.code.0,
    })?;
    let body = &bytes[BASE_HEADER_LEN..];
    let body = match kind {
        Kind::Request => Body::Request(AgreementRequest::decode(body)?),
        Kind::Ack => {
            if body.len() != AGREEMENT_ACK_LEN {
                return Err(WireError::LengthMismatch {
                    expected: AGREEMENT_ACK_LEN,
                    actual: body.len(),
                });
            }
            Body::Ack(AgreementAck {
                session_id: u16::from_be_bytes([body[0], body[1]]),
            })
        }
        Kind::Block => {
            let layout = layout.ok_or(WireError::NoSession)?;
            let hlen = layout.bt_header_len();
            let expected = hlen + layout.packet_size;
            if body.len() != expected {
                return Err(WireError::LengthMismatch {
                    expected: BASE_HEADER_LEN + expected,
                    actual: bytes.len(),
                });
            }
            let mut buf = [0u8; 8];
            buf[8 - hlen..].copy_from_slice(&body[..hlen]);
            let value = u64::from_be_bytes(buf);
            let (b, f) = (layout.block_id_bits(), layout.fragment_bits());
            let used = b as u32 + f as u32;
            if used < 64 && value >> used != 0 {
                return Err(WireError::NonZeroPadding);
            }
            let fragment_index = if f == 0 { 0 } else { (value & ((1u64 << f) - 1)) as u32 };
            let block_id = (value >> f) as u32;
            if block_id >= layout.block_count {
                return Err(WireError::BlockOutOfRange {
                    id: block_id,
                    count: layout.block_count,
                });
            }
            if fragment_index >= layout.fragments {
                return Err(WireError::FragmentOutOfRange {
                    index: fragment_index,
                    count: layout.fragments,
                });
            }
            Body::Block(BlockFragment {
                header: BtHeader {
                    block_id,
                    block_id_bits: b,
                    fragment_index,
                    fragment_bits: f,
                },
                data: body[hlen..].to_vec(),
            })
        }
    };
    Ok(Packet { base, body })
}
