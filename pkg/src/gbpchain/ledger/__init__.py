from .assets import Asset, AssetKind, asset_key, policy_key
from .blocklog import BlockLog
from .chaincode import simulate_chaincode
from .endorsement import And, KOfN, Member, Or, TwoFPlusOne, all_of, evaluate, majority, parse_policy, to_text
from .errors import (BrokenChain, ChaincodeRejection, DuplicateOrg, InvalidKey, KeyAbsent, KeyExists,
                     LedgerError, OwnershipViolation, PolicyUnsatisfied, SimulationMismatch,
                     UnresolvableReference)
from .ledger import Ledger, make_genesis
from .msp import Msp, OrgIdentity
from .network import Network, Peer, TxResult, endorse
from .orderer import SoloOrderer
from .state import StateStore
from .tx import Block, CutReason, Endorsement, Transaction, TransactionProposal, TxStatus, Write, WriteMode
