//! Hand-rolled byte layout for a transaction, independent of the codec module.

pub fn be32(v: u32) -> [u8; 4] {
    v.to_be_bytes()
}

pub struct RefCall<'a> {
    pub tag: u8,
    pub recipient: Option<[u8; 20]>,
    pub amount: Option<u64>,
    pub account: Option<&'a str>,
}

pub fn call_bytes(c: &RefCall) -> Vec<u8> {
    let mut out = vec![c.tag];
    match c.recipient {
        Some(r) => {
            out.push(1);
            out.extend_from_slice(&r);
        }
        None => out.push(0),
    }
    match c.amount {
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.to_be_bytes());
        }
        None => out.push(0),
    }
    match c.account {
        Some(s) => {
            out.push(1);
            out.extend_from_slice(&be32(s.len() as u32));
            out.extend_from_slice(s.as_bytes());
        }
        None => out.push(0),
    }
    out
}

pub fn tx_bytes(sender: [u8; 20], nonce: u64, call: &RefCall, signature: &[u8]) -> Vec<u8> {
    let mut out = sender.to_vec();
    out.extend_from_slice(&nonce.to_be_bytes());
    out.extend(call_bytes(call));
    out.extend_from_slice(&be32(signature.len() as u32));
    out.extend_from_slice(signature);
    out
}
