"""quicprobe: active black-box conformance testing for QUIC version 1 servers.

The toolbox layers are importable on their own: ``wire`` (packet and
frame codec), ``protection`` (key schedule and AEAD), ``conn`` (agent
based connection engine), ``scenarios`` (the conformance tests),
``traces`` (results, metrics and reports), ``dissector`` (declarative
packet dissection) and ``faultsrv`` (the fault-injecting reference
server).
"""

__version__ = "0.1.0"
