from .eid import format_eid, parse_eid
from .mapserver import (AllowRecord, AssociationExpired, DecryptFailure, EventLog, MapServer, NonceCache, Router,
                        SecurityAssociation, SyncResult, UserAgent, confirmation_token, establish_association)
from .transport import InProcessTransport, UdpTransport, serve_udp
from .trie import PatriciaTrie, PolicyTrie
from .wire import (BadVersion, MalformedFrame, MapReply, MapRequest, UnknownType, WireError, decode_message,
                   encode_message)
