class SplatError(Exception):
    """Gaussian 스플랫 연산 관련 도메인 예외"""
    pass


class DegenerateQuaternion(SplatError):
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"쿼터니언 노름이 너무 작습니다: |q|={norm:.3e}")


class InvalidDepth(SplatError):
    def __init__(self, depth: float):
        self.depth = depth
        super().__init__(f"깊이는 0보다 커야 합니다. depth={depth}")


class ShapeMismatch(SplatError):
    def __init__(self, what: str, expected, actual):
        """
        Args:
            what: 비교 대상 이름 (예: "grad_rgb", "input channels")
            expected: 기대 shape
            actual: 실제 shape
        """
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} shape 불일치. 기대값: {expected}, 실제값: {actual}")
