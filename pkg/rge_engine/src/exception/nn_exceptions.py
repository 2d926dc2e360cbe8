class NNEngineError(Exception):
    """리워드 네트워크 연산 엔진 관련 도메인 예외"""
    pass


class StaleGraph(NNEngineError):
    def __init__(self):
        super().__init__("forward 호출 없이 backward가 호출되었습니다.")


class NonFiniteValue(NNEngineError):
    def __init__(self, where: str):
        self.where = where
        super().__init__(f"NaN/Inf 값이 감지되었습니다: {where}")


class NonFiniteGradient(NNEngineError):
    def __init__(self, param_name: str):
        self.param_name = param_name
        super().__init__(f"파라미터 '{param_name}'의 그래디언트가 유한하지 않아 스텝을 중단합니다.")


class ScheduleExhausted(NNEngineError):
    def __init__(self, iteration: int, total: int):
        self.iteration = iteration
        self.total = total
        super().__init__(f"학습률 스케줄 범위를 벗어났습니다. iter={iteration}, total={total}")


class WeightFormatError(NNEngineError):
    def __init__(self, reason: str):
        super().__init__(f"가중치 파일 형식 오류: {reason}")
