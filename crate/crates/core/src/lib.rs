pub mod codec;
pub mod group_crypto;
pub mod hash;
pub mod identity;
pub mod kzg;
pub mod netsim;
pub mod pairing;
pub mod pipeline;
pub mod poa;
pub mod por;
pub mod room_state;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/delegation.md")]
    mod delegation {}
    #[doc = include_str!("../../../book/src/room-keys.md")]
    mod room_keys {}
    #[doc = include_str!("../../../book/src/room-state.md")]
    mod room_state {}
    #[doc = include_str!("../../../book/src/commitments.md")]
    mod commitments {}
    #[doc = include_str!("../../../book/src/settlement.md")]
    mod settlement {}
    #[doc = include_str!("../../../book/src/consensus.md")]
    mod consensus {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
}
