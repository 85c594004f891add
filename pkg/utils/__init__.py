"""共用工具模組：logger、cli（參數與設定）、errors（領域例外）、output_writer（CSV／JSON／run.json）。"""
