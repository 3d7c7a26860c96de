import io
import json
import math

import pytest

from pyadapter.protocol import (MAX_FRAME_BYTES, UNKNOWN_ID, ProtocolError,
                                decode_request, encode_error, encode_request,
                                encode_response, read_frame_line)


class TestCanonicalEncoding:
    def test_request_bytes(self):
        frame = encode_request(7, [[[1.0, 2.5, -3.0]]])
        assert frame == b'{"id":7,"clouds":[[[1.0,2.5,-3.0]]]}\n'

    def test_response_bytes(self):
        assert encode_response(3, [1, 0]) == b'{"id":3,"labels":[1,0]}\n'

    def test_error_bytes(self):
        assert encode_error(UNKNOWN_ID, "bad frame") == b'{"id":-1,"error":"bad frame"}\n'

    def test_numpy_style_ints_coerced(self):
        # encode_response must not leak non-JSON scalar types
        class FakeInt(int):
            pass

        assert encode_response(FakeInt(2), [FakeInt(5)]) == b'{"id":2,"labels":[5]}\n'

    def test_float_round_trip_is_exact(self):
        values = [0.1, 1.0 / 3.0, 1e-17, math.pi, -1.2345678901234567e300]
        frame = encode_request(1, [[values]])
        decoded = json.loads(frame)
        assert decoded["clouds"][0][0] == values


class TestDecodeRequest:
    def test_valid_frame(self):
        rid, payload = decode_request(b'{"id":4,"clouds":[[[0.0,0.0,0.0]]]}\n')
        assert rid == 4
        assert payload == [[[0.0, 0.0, 0.0]]]

    def test_missing_clouds_still_returns_id(self):
        # parsable frame, bad payload: caller answers with an error on this id
        rid, payload = decode_request(b'{"id":9}\n')
        assert rid == 9
        assert payload is None

    def test_garbage_raises(self):
        with pytest.raises(ProtocolError, match="malformed frame"):
            decode_request(b"not json at all\n")

    def test_invalid_utf8_raises(self):
        with pytest.raises(ProtocolError, match="malformed frame"):
            decode_request(b'{"id":1,"clouds":\xff}\n')

    def test_non_object_raises(self):
        with pytest.raises(ProtocolError, match="integer id"):
            decode_request(b"[1,2,3]\n")

    def test_non_integer_id_raises(self):
        for line in (b'{"id":"seven"}\n', b'{"id":7.0}\n', b'{"clouds":[]}\n'):
            with pytest.raises(ProtocolError, match="integer id"):
                decode_request(line)


class TestReadFrameLine:
    def test_reads_lines_then_eof(self):
        stream = io.BytesIO(b'{"id":1}\n{"id":2}\n')
        assert read_frame_line(stream) == b'{"id":1}\n'
        assert read_frame_line(stream) == b'{"id":2}\n'
        assert read_frame_line(stream) is None

    def test_last_line_without_newline(self):
        stream = io.BytesIO(b'{"id":1}')
        assert read_frame_line(stream) == b'{"id":1}'
        assert read_frame_line(stream) is None

    def test_oversized_frame_drains_to_newline(self):
        # the next frame must still be readable after the error
        stream = io.BytesIO(b"x" * 200 + b"\n" + b'{"id":2}\n')
        with pytest.raises(ProtocolError, match="exceeds 64 bytes"):
            read_frame_line(stream, max_frame=64)
        assert read_frame_line(stream, max_frame=64) == b'{"id":2}\n'

    def test_frame_at_cap_passes(self):
        line = b"y" * 63 + b"\n"
        assert read_frame_line(io.BytesIO(line), max_frame=64) == line

    def test_default_cap(self):
        assert MAX_FRAME_BYTES == 64 * 1024 * 1024
