from routes.router import arg

# 모든 단계 명령이 공유하는 플래그
RUN_ARGUMENTS = [
    arg("--config", default=None, help="RunConfig YAML 경로 (생략 시 <out>/config.yaml, 없으면 기본값)"),
    arg("--out", default=None, help="실행 디렉토리 (생략 시 RGE_OUTPUT_ROOT/<output_dir>)"),
    arg("--desk-scale", dest="desk_scale", type=float, default=None, help="반복/점 개수 축소 비율 (1.0 = 원 규모)"),
]
