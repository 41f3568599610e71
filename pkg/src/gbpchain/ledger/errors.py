class LedgerError(Exception):
    pass


class DuplicateOrg(LedgerError):
    pass


class InvalidKey(LedgerError):
    pass


class UnknownOrg(LedgerError):
    pass


class UnresolvableReference(LedgerError):
    """A --src/--dst/--add or delete target that names no existing asset."""


class ChaincodeRejection(LedgerError):
    """Base for rejections raised while simulating chaincode."""


class OwnershipViolation(ChaincodeRejection):
    pass


class KeyExists(ChaincodeRejection):
    pass


class KeyAbsent(ChaincodeRejection):
    pass


class InvalidAsset(ChaincodeRejection):
    pass


class SimulationMismatch(LedgerError):
    pass


class PolicyUnsatisfied(LedgerError):
    pass


class BrokenChain(LedgerError):
    pass


class OrdererBusy(LedgerError):
    pass
