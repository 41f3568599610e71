import ipaddress


def parse_eid(text: str) -> int:
    value = int(ipaddress.IPv4Address(text))
    if value == 0:
        raise ValueError("endpoint id 0.0.0.0 is reserved")
    return value


def format_eid(value: int) -> str:
    if not 0 < value < 1 << 32:
        raise ValueError(f"endpoint id out of range: {value}")
    return str(ipaddress.IPv4Address(value))
